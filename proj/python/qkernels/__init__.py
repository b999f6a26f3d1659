"""Quantized block formats, interleaved Q4_0 matmul kernels and GCQ2 codebook quantization."""

from ._qkernels import (
    CodebookSet,
    QkError,
    bits_per_weight,
    build_codebooks,
    dequantize,
    dequantize_gcq,
    gemv_gcq,
    load_container,
    matmul,
    quantize,
    quantize_gcq,
    repack,
    save_container,
    unpack,
)

__all__ = [
    "CodebookSet",
    "QkError",
    "bits_per_weight",
    "build_codebooks",
    "dequantize",
    "dequantize_gcq",
    "gemv_gcq",
    "load_container",
    "matmul",
    "quantize",
    "quantize_gcq",
    "repack",
    "save_container",
    "unpack",
]
