# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: bit_packing.py
"""Little-endian bit packing and half-precision helpers for block payloads.

All packers work on 2-D arrays of shape (n_blocks, n_values) and return one
row of packed bytes per block. Codes are written LSB first into a little-endian
bit stream, so for 4-bit codes the even index lands in the low nibble.
"""

import math

import numpy as np

from ..exceptions import PayloadError, QuantizationError

HALF_MAX = float(np.finfo(np.float16).max)


def pack_bits(values, bits):
    """Pack unsigned integer codes of width `bits` into bytes.

    Parameters
    ----------
    values : numpy.ndarray
        Array of shape (n_blocks, n_values) with entries in [0, 2**bits - 1].
    bits : int
        Code width; n_values * bits has to be a multiple of 8.

    Returns
    -------
    packed : numpy.ndarray
        uint8 array of shape (n_blocks, n_values * bits // 8).

    """
    values = np.ascontiguousarray(values, dtype=np.uint8)
    n_blocks, n_values = values.shape
    if (n_values * bits) % 8:
        raise ValueError('{} codes of {} bits do not fill whole bytes'.format(
            n_values, bits))
    if bits == 8:
        return values.copy()
    if bits == 4:
        return values[:, 0::2] | (values[:, 1::2] << 4)
    planes = np.unpackbits(values[..., np.newaxis], axis=-1,
                           bitorder='little')[..., :bits]
    return np.packbits(planes.reshape(n_blocks, n_values * bits), axis=-1,
                       bitorder='little')


def unpack_bits(packed, bits, count):
    """Inverse of `pack_bits`: return `count` codes per row as uint8.

    A run of ``bits / gcd(bits, 8)`` bytes holds ``8 / gcd(bits, 8)`` whole
    codes; runs are read as little-endian words and split by shift and mask.
    """
    packed = np.ascontiguousarray(packed, dtype=np.uint8)
    n_blocks = packed.shape[0]
    if packed.shape[1] * 8 < count * bits:
        raise PayloadError('packed field too short for {} codes of {} bits'.format(
            count, bits))
    if bits == 8:
        return packed[:, :count].copy()
    if bits == 4:
        out = np.empty((n_blocks, count), dtype=np.uint8)
        out[:, 0::2] = packed[:, :count // 2] & 0x0F
        out[:, 1::2] = packed[:, :count // 2] >> 4
        return out

    run_bytes = bits // math.gcd(bits, 8)
    run_codes = 8 // math.gcd(bits, 8)
    if count % run_codes:
        planes = np.unpackbits(packed, axis=-1, bitorder='little')[:, :count * bits]
        planes = planes.reshape(n_blocks, count, bits)
        weights = (1 << np.arange(bits)).astype(np.uint8)
        return (planes * weights).sum(axis=-1, dtype=np.uint8)

    word_type = np.uint32 if run_bytes <= 4 else np.uint64
    n_runs = count // run_codes
    runs = packed[:, :n_runs * run_bytes].reshape(n_blocks, n_runs, run_bytes)
    words = runs[..., 0].astype(word_type)
    for index in range(1, run_bytes):
        words |= runs[..., index].astype(word_type) << word_type(8 * index)
    shifts = np.arange(run_codes, dtype=word_type) * word_type(bits)
    codes = (words[..., np.newaxis] >> shifts) & word_type((1 << bits) - 1)
    return codes.reshape(n_blocks, count).astype(np.uint8)


def to_half(values, what='scale'):
    """Convert to IEEE half precision (round to nearest even).

    Raises
    ------
    QuantizationError
        If a finite value overflows the half-precision range.

    """
    values = np.asarray(values, dtype=np.float64)
    if np.any(np.abs(values) > HALF_MAX):
        # values within half an ulp of HALF_MAX still round to HALF_MAX
        half = values.astype(np.float16)
        if not np.all(np.isfinite(half)):
            raise QuantizationError(
                '{} of magnitude {:.6g} overflows half precision'.format(
                    what, float(np.max(np.abs(values)))))
        return half
    return values.astype(np.float16)


def half_to_bytes(values):
    """(n_blocks,) half values -> (n_blocks, 2) little-endian bytes."""
    values = np.ascontiguousarray(values, dtype='<f2')
    return values.view(np.uint8).reshape(-1, 2)


def bytes_to_half(raw):
    """(n_blocks, 2) bytes -> (n_blocks,) float16 values."""
    raw = np.ascontiguousarray(raw, dtype=np.uint8)
    return raw.view('<f2').reshape(-1).astype(np.float16)
