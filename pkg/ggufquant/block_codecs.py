# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: block_codecs.py
"""Encoding and decoding of the block quantization formats.

Every block format reconstructs a weight as ``scale_g * q + offset_g`` where
``g`` is the group (whole block for the legacy formats, sub-block for the
K-quants) the weight belongs to:

- symmetric legacy (Q4_0, Q5_0, Q8_0): ``d * q`` with signed codes,
- affine legacy (Q4_1, Q5_1): ``d * q + m`` with unsigned codes,
- symmetric K (Q3_K, Q6_K): ``(d * sc_g) * q`` with signed 6/8-bit ``sc_g``,
- affine K (Q4_K, Q5_K): ``(d * sc_g) * q - dmin * m_g`` with 6-bit ``sc_g, m_g``.

Half-precision fields are stored little-endian, codes are bit packed LSB first
(see `utils.bit_packing`). Quantization rounds half away from zero and refits
every block on its own reconstruction until the packed bytes no longer change,
so re-quantizing a dequantized tensor reproduces its payload byte for byte.
"""

import collections
import functools
import warnings

import numpy as np

from .exceptions import PayloadError, QuantizationError, ShapeError
from .parallel_processing import parallel_process
from .schemes import (FORMATS, QuantizedTensor, get_format, get_scheme,
                      make_tensor, resolve_tensor_layout, tensor_nbytes)
from .utils.bit_packing import (bytes_to_half, half_to_bytes, pack_bits,
                                to_half, unpack_bits)
from .utils.output import format_warning

warnings.showwarning = format_warning

MAX_SETTLE_ROUNDS = 32
CHUNK_BLOCKS = 4096

# Byte fields of one block, in storage order. 'qs' holds the low code bits,
# 'qh' the high code bits, 'scales' the quantized sub-block scales (and mins).
FIELD_LAYOUTS = {
    'Q4_0': [('d', 2), ('qs', 16)],
    'Q4_1': [('d', 2), ('m', 2), ('qs', 16)],
    'Q5_0': [('d', 2), ('qh', 4), ('qs', 16)],
    'Q5_1': [('d', 2), ('m', 2), ('qh', 4), ('qs', 16)],
    'Q8_0': [('d', 2), ('qs', 32)],
    'Q3_K': [('qh', 32), ('qs', 64), ('scales', 12), ('d', 2)],
    'Q4_K': [('d', 2), ('dmin', 2), ('scales', 12), ('qs', 128)],
    'Q5_K': [('d', 2), ('dmin', 2), ('scales', 12), ('qh', 32), ('qs', 128)],
    'Q6_K': [('qs', 128), ('qh', 64), ('scales', 16), ('d', 2)],
}

ErrorStats = collections.namedtuple('ErrorStats', [
    'rmse', 'max_abs_err', 'mean_err', 'empirical_var', 'predicted_var'])


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def assign_codes(values, scale, qmin, qmax, offset=0.):
    """Nearest codes of ``values`` on the grid ``scale * q + offset``.

    Groups with a zero scale get code 0.
    """
    with np.errstate(divide='ignore', invalid='ignore'):
        q = round_half_away((values - offset) / scale)
    q = np.where(scale != 0, q, 0.)
    return np.clip(q, qmin, qmax).astype(np.int16)


def signed_extreme(values):
    """Entry of largest magnitude along the last axis.

    When +a and -a both reach the largest magnitude, -a is returned, so the
    negative extreme lands exactly on the most negative code. All-zero rows
    give +0.
    """
    amax = np.max(np.abs(values), axis=-1)
    negative = np.any(values == -amax[..., np.newaxis], axis=-1) & (amax > 0)
    return np.where(negative, -amax, amax)


class BlockCodec(object):
    """Packs and unpacks the blocks of one format.

    Parameters
    ----------
    layout : FormatLayout or str
        Block format; float formats have no codec.

    """

    def __init__(self, layout):
        self.layout = get_format(layout)
        if self.layout.is_float:
            raise ValueError('{} is not a block format'.format(self.layout.name))
        self.fields = FIELD_LAYOUTS[self.layout.name]
        self.slices = collections.OrderedDict()
        start = 0
        for name, nbytes in self.fields:
            self.slices[name] = slice(start, start + nbytes)
            start += nbytes
        assert start == self.layout.block_bytes

        self.qmin, self.qmax = self.layout.code_range
        self.group_size = self.layout.group_size
        self.n_groups = self.layout.sub_blocks
        qh = dict(self.fields).get('qh', 0)
        self.high_bits = qh * 8 // self.layout.block_weights
        self.low_bits = self.layout.code_bits - self.high_bits
        self.signed_storage = self.layout.code_bits == 8

    # ---- packing ---------------------------------------------------------

    def _pack_codes(self, codes, parts):
        if self.signed_storage:
            parts['qs'] = codes.astype(np.int8).view(np.uint8)
            return
        unsigned = (codes - self.qmin).astype(np.uint8)
        parts['qs'] = pack_bits(unsigned & ((1 << self.low_bits) - 1),
                                self.low_bits)
        if self.high_bits:
            parts['qh'] = pack_bits(unsigned >> self.low_bits, self.high_bits)

    def _unpack_codes(self, raw):
        count = self.layout.block_weights
        qs = raw[:, self.slices['qs']]
        if self.signed_storage:
            return np.ascontiguousarray(qs).view(np.int8).astype(np.int16)
        unsigned = unpack_bits(qs, self.low_bits, count).astype(np.int16)
        if self.high_bits:
            high = unpack_bits(raw[:, self.slices['qh']], self.high_bits, count)
            unsigned |= high.astype(np.int16) << self.low_bits
        return unsigned + self.qmin

    def _join(self, parts):
        return np.concatenate([parts[name] for name, _ in self.fields], axis=1)

    def _half_field(self, raw, name):
        values = bytes_to_half(raw[:, self.slices[name]])
        if not np.all(np.isfinite(values)):
            raise PayloadError('non-finite {} field in {} payload'.format(
                name, self.layout.name))
        return values.astype(np.float32)

    # ---- fitting ---------------------------------------------------------

    def fit(self, blocks):
        """Direct fit of blocks (n_blocks, block_weights) to packed bytes."""
        blocks = np.asarray(blocks, dtype=np.float64)
        if self.layout.is_superblock:
            if self.layout.has_offset:
                return self._fit_superblock_affine(blocks)
            return self._fit_superblock_symmetric(blocks)
        if self.layout.has_offset:
            return self._fit_affine(blocks)
        return self._fit_symmetric(blocks)

    def _fit_symmetric(self, blocks):
        # largest magnitude maps onto qmin
        d = to_half(signed_extreme(blocks) / self.qmin)
        codes = assign_codes(blocks, d.astype(np.float64)[:, np.newaxis],
                             self.qmin, self.qmax)
        parts = {'d': half_to_bytes(d)}
        self._pack_codes(codes, parts)
        return self._join(parts)

    def _fit_affine(self, blocks):
        low = blocks.min(axis=1)
        high = blocks.max(axis=1)
        d = to_half((high - low) / self.qmax)
        m = to_half(low, what='min')
        codes = assign_codes(blocks, d.astype(np.float64)[:, np.newaxis],
                             self.qmin, self.qmax,
                             offset=m.astype(np.float64)[:, np.newaxis])
        parts = {'d': half_to_bytes(d), 'm': half_to_bytes(m)}
        self._pack_codes(codes, parts)
        return self._join(parts)

    def _sub_scale_range(self):
        return -2**(self.layout.scale_bits - 1), 2**(self.layout.scale_bits - 1) - 1

    def _fit_superblock_symmetric(self, blocks):
        n_blocks = blocks.shape[0]
        groups = blocks.reshape(n_blocks, self.n_groups, self.group_size)
        scales = signed_extreme(groups) / self.qmin

        sc_min, sc_max = self._sub_scale_range()
        d = to_half(signed_extreme(scales) / sc_min)
        sc = assign_codes(scales, d.astype(np.float64)[:, np.newaxis], sc_min, sc_max)

        effective = d.astype(np.float32)[:, np.newaxis] * sc.astype(np.float32)
        codes = assign_codes(groups, effective.astype(np.float64)[..., np.newaxis],
                             self.qmin, self.qmax)

        parts = {'d': half_to_bytes(d)}
        if self.layout.scale_bits == 8:
            parts['scales'] = sc.astype(np.int8).view(np.uint8)
        else:
            parts['scales'] = pack_bits((sc - sc_min).astype(np.uint8),
                                        self.layout.scale_bits)
        self._pack_codes(codes.reshape(n_blocks, -1), parts)
        return self._join(parts)

    def _fit_superblock_affine(self, blocks):
        n_blocks = blocks.shape[0]
        groups = blocks.reshape(n_blocks, self.n_groups, self.group_size)
        # mins are stored as non-negative magnitudes, so the range always covers 0
        low = np.minimum(groups.min(axis=2), 0.)
        high = groups.max(axis=2)
        scales = (high - low) / self.qmax
        mins = -low

        sc_max = 2**self.layout.scale_bits - 1
        m_max = 2**self.layout.min_bits - 1
        d = to_half(scales.max(axis=1) / sc_max)
        dmin = to_half(mins.max(axis=1) / m_max, what='min')
        sc = assign_codes(scales, d.astype(np.float64)[:, np.newaxis], 0, sc_max)
        mq = assign_codes(mins, dmin.astype(np.float64)[:, np.newaxis], 0, m_max)

        effective = d.astype(np.float32)[:, np.newaxis] * sc.astype(np.float32)
        offset = -(dmin.astype(np.float32)[:, np.newaxis] * mq.astype(np.float32))
        codes = assign_codes(groups, effective.astype(np.float64)[..., np.newaxis],
                             self.qmin, self.qmax,
                             offset=offset.astype(np.float64)[..., np.newaxis])

        parts = {'d': half_to_bytes(d), 'dmin': half_to_bytes(dmin),
                 'scales': pack_bits(np.concatenate([sc, mq], axis=1).astype(np.uint8),
                                     self.layout.scale_bits)}
        self._pack_codes(codes.reshape(n_blocks, -1), parts)
        return self._join(parts)

    # ---- decoding --------------------------------------------------------

    def unpack(self, raw):
        """Affine view of packed blocks.

        Returns
        -------
        codes : numpy.ndarray
            int16 array (n_blocks, n_groups, group_size).
        scale : numpy.ndarray
            float32 array (n_blocks, n_groups).
        offset : numpy.ndarray
            float32 array (n_blocks, n_groups).

        """
        raw = np.asarray(raw, dtype=np.uint8)
        if raw.ndim != 2 or raw.shape[1] != self.layout.block_bytes:
            raise PayloadError('{} blocks have {} bytes, got shape {}'.format(
                self.layout.name, self.layout.block_bytes, raw.shape))
        n_blocks = raw.shape[0]
        codes = self._unpack_codes(raw).reshape(
            n_blocks, self.n_groups, self.group_size)
        d = self._half_field(raw, 'd')[:, np.newaxis]

        if not self.layout.is_superblock:
            scale = d
            if self.layout.has_offset:
                offset = self._half_field(raw, 'm')[:, np.newaxis]
            else:
                offset = np.zeros_like(d)
            return codes, scale, offset

        scales_raw = raw[:, self.slices['scales']]
        if self.layout.has_offset:
            packed = unpack_bits(scales_raw, self.layout.scale_bits, 2 * self.n_groups)
            sc = packed[:, :self.n_groups].astype(np.float32)
            mq = packed[:, self.n_groups:].astype(np.float32)
            dmin = self._half_field(raw, 'dmin')[:, np.newaxis]
            return codes, d * sc, -(dmin * mq)

        if self.layout.scale_bits == 8:
            sc = np.ascontiguousarray(scales_raw).view(np.int8).astype(np.float32)
        else:
            sc_min = self._sub_scale_range()[0]
            sc = unpack_bits(scales_raw, self.layout.scale_bits,
                             self.n_groups).astype(np.float32) + sc_min
        return codes, d * sc, np.zeros((n_blocks, self.n_groups), dtype=np.float32)

    def decode(self, raw):
        codes, scale, offset = self.unpack(raw)
        values = (codes.astype(np.float32) * scale[..., np.newaxis]
                  + offset[..., np.newaxis])
        return values.reshape(raw.shape[0], self.layout.block_weights)

    def step_sizes(self, blocks):
        """Quantization step per group, taken from the unquantized values."""
        blocks = np.asarray(blocks, dtype=np.float64)
        groups = blocks.reshape(blocks.shape[0], self.n_groups, self.group_size)
        if self.layout.has_offset:
            low = groups.min(axis=2)
            if self.layout.is_superblock:
                low = np.minimum(low, 0.)
            return (groups.max(axis=2) - low) / self.qmax
        return np.abs(groups).max(axis=2) / -self.qmin


@functools.lru_cache(maxsize=None)
def get_codec(name):
    return BlockCodec(name)


def encode_blocks(codec, blocks):
    """Quantize blocks and settle them on a fixed point of fit(decode(.))."""
    packed = codec.fit(blocks)
    active = np.arange(packed.shape[0])
    for _ in range(MAX_SETTLE_ROUNDS):
        refit = codec.fit(codec.decode(packed[active]))
        changed = np.any(refit != packed[active], axis=1)
        if not changed.any():
            return packed
        active = active[changed]
        packed[active] = refit[changed]
    warnings.warn('{} of {} {} blocks did not settle after {} rounds'.format(
        active.size, packed.shape[0], codec.layout.name, MAX_SETTLE_ROUNDS))
    return packed


def as_byte_array(payload):
    if isinstance(payload, (bytes, bytearray, memoryview)):
        return np.frombuffer(payload, dtype=np.uint8)
    return np.asarray(payload, dtype=np.uint8).reshape(-1)


def _check_finite(values, name):
    if not np.all(np.isfinite(values)):
        raise QuantizationError("tensor '{}' contains non-finite values".format(name))


def quantize_block(values, layout):
    """Quantize one block of `layout.block_weights` values.

    Returns
    -------
    block : bytes
        Packed block of `layout.block_bytes` bytes.

    """
    layout = get_format(layout)
    values = np.asarray(values, dtype=np.float32).ravel()
    if layout.is_float or values.size != layout.block_weights:
        raise ShapeError('{} blocks hold {} values, got {}'.format(
            layout.name, layout.block_weights, values.size))
    _check_finite(values, 'block')
    return encode_blocks(get_codec(layout.name), values[np.newaxis, :])[0].tobytes()


def dequantize_block(block, layout):
    layout = get_format(layout)
    raw = np.frombuffer(bytes(block), dtype=np.uint8)
    if layout.is_float or raw.size != layout.block_bytes:
        raise PayloadError('{} blocks have {} bytes, got {}'.format(
            layout.name, layout.block_bytes, raw.size))
    return get_codec(layout.name).decode(raw[np.newaxis, :])[0]


def quantize_array(values, layout, name='', n_jobs=1):
    """Quantize an array (last dimension contiguous) into a payload.

    Returns
    -------
    payload : numpy.ndarray
        uint8 array of `tensor_nbytes(values.shape, layout)` bytes.

    """
    layout = get_format(layout)
    values = np.ascontiguousarray(values, dtype=np.float32)
    tensor_nbytes(values.shape, layout, name=name)
    _check_finite(values, name)

    if layout.is_float:
        if layout.name == 'F16':
            if np.any(np.abs(values) > np.finfo(np.float16).max):
                raise QuantizationError(
                    "tensor '{}' exceeds the half-precision range".format(name))
            return values.astype('<f2').view(np.uint8).ravel()
        return values.astype('<f4').view(np.uint8).ravel()

    codec = get_codec(layout.name)
    blocks = values.reshape(-1, layout.block_weights)
    chunks = [blocks[start:start + CHUNK_BLOCKS]
              for start in range(0, blocks.shape[0], CHUNK_BLOCKS)]
    packed = parallel_process(chunks, functools.partial(encode_blocks, codec),
                              n_jobs=n_jobs, front_num=0, progress=False)
    return np.concatenate(packed).ravel()


def dequantize_payload(payload, layout, shape, name=''):
    """Reconstruct float32 values of `shape` from a payload."""
    layout = get_format(layout)
    raw = as_byte_array(payload)
    expected = tensor_nbytes(shape, layout, name=name)
    if raw.size != expected:
        raise PayloadError("tensor '{}': {} payload of shape {} has {} bytes, "
                           "expected {}".format(name, layout.name, tuple(shape),
                                                raw.size, expected))
    if layout.name == 'F32':
        values = raw.view('<f4').astype(np.float32)
    elif layout.name == 'F16':
        values = raw.view('<f2').astype(np.float32)
    else:
        values = get_codec(layout.name).decode(raw.reshape(-1, layout.block_bytes))
    return values.reshape(shape)


def quantize_tensor(tensor, scheme, n_layers=None, mix_rules=None, n_jobs=1):
    """Quantize a named tensor under a scheme's mix rules.

    Parameters
    ----------
    tensor : TensorF32
        Named tensor; its name decides the tensor role.
    scheme : str or QuantScheme
        Scheme id.
    n_layers : int
        Depth of the model, needed by per-layer mix rules.
    mix_rules : dict
        Overrides the shipped mix rules.
    n_jobs : int
        Worker threads; the payload does not depend on it.

    Returns
    -------
    QuantizedTensor

    """
    scheme = get_scheme(scheme)
    layout = resolve_tensor_layout(scheme, tensor.name, n_layers=n_layers,
                                   mix_rules=mix_rules)
    payload = quantize_array(tensor.data, layout, name=tensor.name, n_jobs=n_jobs)
    return QuantizedTensor(tensor.name, scheme.id, tuple(tensor.shape), layout,
                           payload)


def dequantize_tensor(quantized):
    values = dequantize_payload(quantized.payload, quantized.layout,
                                quantized.shape, name=quantized.name)
    return make_tensor(quantized.name, values)


def error_stats(original, reconstructed, layout):
    """Reconstruction error statistics and the Δ²/12 model prediction.

    Parameters
    ----------
    original, reconstructed : TensorF32 or numpy.ndarray
        Same shape.
    layout : FormatLayout or str
        Format used for the reconstruction; its step sizes are derived from
        the original values block by block (group by group for K-quants).

    Returns
    -------
    ErrorStats

    """
    original = np.asarray(getattr(original, 'data', original), dtype=np.float64)
    reconstructed = np.asarray(getattr(reconstructed, 'data', reconstructed),
                               dtype=np.float64)
    if original.shape != reconstructed.shape:
        raise ShapeError('shape mismatch: {} vs {}'.format(
            original.shape, reconstructed.shape))
    layout = get_format(layout)
    error = reconstructed - original
    if error.size == 0:
        raise ShapeError('empty tensors')

    if layout.is_float:
        predicted_var = 0.
    else:
        tensor_nbytes(original.shape, layout)
        steps = get_codec(layout.name).step_sizes(
            original.reshape(-1, layout.block_weights))
        predicted_var = float(np.mean(steps**2) / 12.)

    return ErrorStats(rmse=float(np.sqrt(np.mean(error**2))),
                      max_abs_err=float(np.max(np.abs(error))),
                      mean_err=float(np.mean(error)),
                      empirical_var=float(np.var(error)),
                      predicted_var=predicted_var)


def tensor_error_stats(tensor, scheme, n_layers=None, mix_rules=None):
    quantized = quantize_tensor(tensor, scheme, n_layers=n_layers,
                                mix_rules=mix_rules)
    return error_stats(tensor, dequantize_tensor(quantized), quantized.layout)


def layout_table():
    """One row per storage format describing its exact byte layout."""
    rows = []
    for layout in FORMATS.values():
        if layout.is_float:
            fields = 'value:{}'.format(layout.block_bytes)
            code_range = '--'
        else:
            fields = ' '.join('{}:{}'.format(name, nbytes)
                              for name, nbytes in FIELD_LAYOUTS[layout.name])
            code_range = '[{}, {}]'.format(*layout.code_range)
        rows.append(collections.OrderedDict([
            ('format', layout.name),
            ('type_id', layout.type_id),
            ('block_weights', layout.block_weights),
            ('block_bytes', layout.block_bytes),
            ('bpw', layout.bpw),
            ('kind', layout.kind),
            ('code_bits', layout.code_bits),
            ('code_range', code_range),
            ('sub_blocks', layout.sub_blocks),
            ('scale_bits', layout.scale_bits),
            ('min_bits', layout.min_bits),
            ('fields', fields),
        ]))
    return rows


def block_parameters(payload, layout):
    """Affine view of a block payload: codes, per-group scale and offset.

    Returns
    -------
    codes : numpy.ndarray
        int16 (n_blocks, n_groups, group_size).
    scale, offset : numpy.ndarray
        float32 (n_blocks, n_groups); a weight decodes to
        ``codes * scale[..., None] + offset[..., None]``.

    """
    layout = get_format(layout)
    if layout.is_float:
        raise PayloadError('{} payloads carry no block parameters'.format(layout.name))
    raw = as_byte_array(payload)
    if raw.size % layout.block_bytes:
        raise PayloadError('{} bytes are not a whole number of {} blocks'.format(
            raw.size, layout.name))
    return get_codec(layout.name).unpack(raw.reshape(-1, layout.block_bytes))


def layout_doc():
    """Plain-text description of every block layout (for `ggufquant layout-doc`)."""
    lines = ['Block layouts (little-endian; packed codes LSB first, low nibble = even index)', '']
    for row in layout_table():
        lines.append('{format} (type {type_id}): {block_weights} weights in '
                     '{block_bytes} bytes, {bpw:.4g} bpw, {kind}, codes {code_range}'.format(**row))
        lines.append('    fields: {}'.format(row['fields']))
    return '\n'.join(lines)
