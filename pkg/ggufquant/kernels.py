# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: kernels.py
"""Matrix-vector and matrix-matrix products on block quantized weights.

A weight matrix is unpacked once (`prepare_weights`) into int8 codes with
float32 group scales and offsets. The matvec path quantizes the activation
row to Q8_0 and evaluates every weight group in the integer domain::

    y_r = sum_g  S_rg * dx_g * sum_k(q_rgk * xq_gk)  +  O_rg * dx_g * sum_k(xq_gk)

Codes are at most 8 bits wide and groups hold at most 32 weights, so every
product and inner sum is an integer below 2**24 and float32 represents it
exactly; BLAS evaluates the inner sums without rounding. The outer sum runs
over the groups from left to right in float32, so results do not depend on
how rows are split across threads.
The matmul path (prefill batches) decodes one tile of weight rows at a time and
hands it to BLAS; the full float matrix is never held in memory.
"""

import collections

import numpy as np

from .block_codecs import encode_blocks, get_codec
from .exceptions import QuantizationError, ShapeError, UnsupportedKernelError
from .parallel_processing import parallel_process
from .schemes import FORMATS, get_format

Q8_BLOCK = 32
# float32 working tile of about 1 MiB
TILE_WEIGHTS = 1 << 18
TILE_ROWS = 256

ActivationBlocksQ8 = collections.namedtuple('ActivationBlocksQ8', ['scales', 'codes'])

KernelOperand = collections.namedtuple('KernelOperand', [
    'name', 'layout', 'shape', 'payload', 'codes', 'scale', 'offset'])


def quantize_activations_q8(row):
    """Symmetric Q8_0 quantization of an activation row.

    Parameters
    ----------
    row : array-like
        Values, length a multiple of 32.

    Returns
    -------
    ActivationBlocksQ8
        float32 `scales` (n_blocks,) and int8 `codes` (n_blocks, 32); element
        ``i`` of block ``b`` reconstructs as ``scales[b] * codes[b, i]``.

    """
    row = np.asarray(row, dtype=np.float32).ravel()
    if row.size == 0 or row.size % Q8_BLOCK:
        raise ShapeError('activation length {} is not a multiple of {}'.format(
            row.size, Q8_BLOCK))
    if not np.all(np.isfinite(row)):
        raise QuantizationError('activation row contains non-finite values')
    codec = get_codec('Q8_0')
    codes, scale, _ = codec.unpack(encode_blocks(codec, row.reshape(-1, Q8_BLOCK)))
    return ActivationBlocksQ8(scale[:, 0], codes[:, 0, :].astype(np.int8))


def prepare_weights(weights):
    """Unpack a weight matrix for repeated products.

    Parameters
    ----------
    weights : QuantizedTensor, gguf_io.TensorEntry or KernelOperand
        Matrix of shape (n_rows, n_cols), payload rows contiguous.

    Returns
    -------
    KernelOperand
        Block formats carry int8 `codes` (n_rows, n_cols) and float32 `scale`
        and `offset` (n_rows, n_groups); `offset` is None for symmetric
        formats. Float formats keep only their payload rows.

    """
    if isinstance(weights, KernelOperand):
        return weights
    layout = get_format(weights.layout)
    shape = tuple(weights.shape)
    if len(shape) != 2:
        raise ShapeError("tensor '{}' with shape {} is not a matrix".format(
            weights.name, shape))
    payload = np.asarray(weights.payload, dtype=np.uint8).reshape(shape[0], -1)
    if layout.is_float:
        return KernelOperand(weights.name, layout, shape, payload, None, None, None)

    codes, scale, offset = get_codec(layout.name).unpack(
        payload.reshape(-1, layout.block_bytes))
    n_rows = shape[0]
    return KernelOperand(
        weights.name, layout, shape, payload,
        codes.astype(np.int8).reshape(shape),
        scale.reshape(n_rows, -1),
        offset.reshape(n_rows, -1) if layout.has_offset else None)


def _row_tiles(shape, n_weights=TILE_WEIGHTS):
    rows = max(1, n_weights // shape[1])
    return [(start, min(start + rows, shape[0])) for start in range(0, shape[0], rows)]


def _integer_matvec(operand, x, n_threads=1, executor=None):
    activations = quantize_activations_q8(x)
    group = operand.layout.group_size
    x_codes = activations.codes.astype(np.float32).ravel()
    x_scale = np.repeat(activations.scales, Q8_BLOCK // group)
    x_sums = x_codes.reshape(-1, group).sum(axis=1)
    ones = np.ones(group, dtype=np.float32)

    def rows(bound):
        start, stop = bound
        products = np.multiply(operand.codes[start:stop], x_codes, dtype=np.float32)
        sums = (products.reshape(-1, group) @ ones).reshape(stop - start, -1)
        terms = (operand.scale[start:stop] * x_scale) * sums
        if operand.offset is not None:
            terms += (operand.offset[start:stop] * x_scale) * x_sums
        # cumsum adds strictly left to right
        return np.cumsum(terms, axis=1, dtype=np.float32)[:, -1]

    parts = parallel_process(_row_tiles(operand.shape), rows, n_jobs=n_threads,
                             front_num=0, progress=False, executor=executor)
    return np.concatenate(parts)


def _float_tile(layout, payload, start, stop):
    dtype = '<f2' if layout.name == 'F16' else '<f4'
    return np.ascontiguousarray(payload[start:stop]).view(dtype).astype(np.float32)


def _decode_tile(operand, start, stop):
    if operand.layout.is_float:
        return _float_tile(operand.layout, operand.payload, start, stop)
    rows = stop - start
    group = operand.layout.group_size
    codes = operand.codes[start:stop].reshape(rows, -1, group).astype(np.float32)
    values = codes * operand.scale[start:stop, :, np.newaxis]
    if operand.offset is not None:
        values += operand.offset[start:stop, :, np.newaxis]
    return values.reshape(rows, -1)


def _float_matvec(operand, x, n_threads=1, executor=None):
    def rows(bound):
        return _decode_tile(operand, bound[0], bound[1]) @ x

    parts = parallel_process(_row_tiles(operand.shape), rows, n_jobs=n_threads,
                             front_num=0, progress=False, executor=executor)
    return np.concatenate(parts)


KERNELS = {name: _integer_matvec for name, layout in FORMATS.items()
           if not layout.is_float}
KERNELS.update({'F32': _float_matvec, 'F16': _float_matvec})


def matvec_quantized(weights, x, n_threads=1, executor=None, allow_fallback=False):
    """y = W x for a weight matrix kept in its storage format.

    Parameters
    ----------
    weights : QuantizedTensor, gguf_io.TensorEntry or KernelOperand
        Matrix of shape (n_rows, n_cols); pass a `KernelOperand` from
        `prepare_weights` to unpack the codes only once.
    x : array-like
        Vector of length n_cols.
    n_threads : int
        Workers over row tiles; the result is bitwise independent of it.
    executor : concurrent.futures.ThreadPoolExecutor
        Reused pool (the bench harness keeps one per run).
    allow_fallback : bool
        Use the dequantize-then-multiply path for formats without a kernel
        instead of raising `UnsupportedKernelError`.

    Returns
    -------
    y : numpy.ndarray
        float32 vector of length n_rows.

    """
    operand = prepare_weights(weights)
    x = np.asarray(x, dtype=np.float32).ravel()
    if x.size != operand.shape[1]:
        raise ShapeError("tensor '{}' has {} columns, vector has {} entries".format(
            operand.name, operand.shape[1], x.size))
    kernel = KERNELS.get(operand.layout.name)
    if kernel is None:
        if not allow_fallback:
            raise UnsupportedKernelError("no matvec kernel for {} (tensor '{}')".format(
                operand.layout.name, operand.name))
        kernel = _float_matvec
    return kernel(operand, x, n_threads=n_threads, executor=executor)


def matmul_quantized(weights, batch, n_threads=1, executor=None):
    """Y = X W^T for a batch of rows X (n, n_cols), decoding W tile by tile."""
    operand = prepare_weights(weights)
    batch = np.asarray(batch, dtype=np.float32)
    if batch.ndim != 2 or batch.shape[1] != operand.shape[1]:
        raise ShapeError("tensor '{}' has {} columns, batch has shape {}".format(
            operand.name, operand.shape[1], batch.shape))
    bounds = [(start, min(start + TILE_ROWS, operand.shape[0]))
              for start in range(0, operand.shape[0], TILE_ROWS)]

    def tile(bound):
        return batch @ _decode_tile(operand, bound[0], bound[1]).T

    parts = parallel_process(bounds, tile, n_jobs=n_threads, front_num=0,
                             progress=False, executor=executor)
    return np.concatenate(parts, axis=1)


def select_rows(weights, rows):
    """Decoded float32 rows of a matrix (embedding lookup)."""
    layout = get_format(weights.layout)
    shape = tuple(weights.shape)
    if len(shape) != 2:
        raise ShapeError("tensor '{}' with shape {} is not a matrix".format(
            weights.name, shape))
    payload = np.asarray(weights.payload, dtype=np.uint8).reshape(shape[0], -1)
    selected = payload[np.asarray(rows, dtype=np.int64).ravel()]
    if layout.is_float:
        return _float_tile(layout, selected, 0, selected.shape[0])
    return get_codec(layout.name).decode(
        selected.reshape(-1, layout.block_bytes)).reshape(selected.shape[0], -1)
