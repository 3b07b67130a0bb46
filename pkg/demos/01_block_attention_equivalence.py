#!/usr/bin/env python3
"""Joint attention and its block-partitioned decomposition.

A multimodal block concatenates text and image tokens and runs one softmax
attention over all of them. The same computation can be laid out as a 2x2
block structure whose pieces separate what each image token takes from text
tokens (i2t) versus from other image tokens (i2i). This demo shows both
computations agree, and that the four blocks share a single normalisation.
"""

import numpy as np

from ong.attention import (
    BlockWeights,
    ModalityFeatures,
    block_attention,
    compute_qkv,
    joint_attention,
)

rng = np.random.default_rng(0)
d_model, d_k, d_v, heads = 16, 8, 8, 2
n_text, n_image = 3, 6

features = ModalityFeatures(
    text=rng.standard_normal((n_text, d_model)),
    image=rng.standard_normal((n_image, d_model)),
)
weights = BlockWeights(
    w_q_text=rng.standard_normal((heads, d_model, d_k)) / np.sqrt(d_model),
    w_k_text=rng.standard_normal((heads, d_model, d_k)) / np.sqrt(d_model),
    w_v_text=rng.standard_normal((heads, d_model, d_v)) / np.sqrt(d_model),
    w_q_image=rng.standard_normal((heads, d_model, d_k)) / np.sqrt(d_model),
    w_k_image=rng.standard_normal((heads, d_model, d_k)) / np.sqrt(d_model),
    w_v_image=rng.standard_normal((heads, d_model, d_v)) / np.sqrt(d_model),
)

qkv = compute_qkv(features, weights)
z_text, z_image = joint_attention(qkv)
decomp = block_attention(qkv)

print("=== shapes ===")
print(f"text tokens: {n_text}, image tokens: {n_image}, heads: {heads}")
print(f"A_i2t per head: {decomp.a_i2t.shape[1:]},  A_i2i per head: {decomp.a_i2i.shape[1:]}")
print(f"Z_i2t per head: {decomp.z_i2t.shape[1:]},  Z_i2i per head: {decomp.z_i2i.shape[1:]}")

print("\n=== one normalisation across the four blocks ===")
row_sums = decomp.a_i2t.sum(axis=2) + decomp.a_i2i.sum(axis=2)
print("max |row sum - 1| over image-query rows:", f"{np.abs(row_sums - 1).max():.2e}")
text_mass = decomp.a_i2t[0].sum(axis=1)
print("head 0, attention mass each image token gives to text tokens:")
print(" ", np.round(text_mass, 3))

print("\n=== block recomposition equals the monolithic computation ===")
print("max |(z_i2t + z_i2i) - z_image|:", f"{np.abs(decomp.z_image - z_image).max():.2e}")
print("max |(z_t2t + z_t2i) - z_text| :", f"{np.abs(decomp.z_text - z_text).max():.2e}")

print("\n=== why slicing must happen after the softmax ===")
from ong import linalg

wrong = linalg.softmax_rows(
    linalg.matmul(qkv.q_image[0], qkv.k_text[0].T), 1.0 / np.sqrt(d_k)
)
print("normalising the i2t block on its own gives rows that sum to 1:")
print("  wrong block row sums:", np.round(wrong.sum(axis=1), 3))
print("but the jointly normalised i2t rows sum to the text share only:")
print("  joint i2t row sums:  ", np.round(decomp.a_i2t[0].sum(axis=1), 3))
print("max difference between the two i2t maps:", f"{np.abs(wrong - decomp.a_i2t[0]).max():.3f}")
