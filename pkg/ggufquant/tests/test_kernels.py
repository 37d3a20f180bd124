# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: test_kernels.py

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from ..block_codecs import dequantize_payload, quantize_array, quantize_tensor
from ..exceptions import QuantizationError, ShapeError, UnsupportedKernelError
from ..kernels import (KERNELS, matmul_quantized, matvec_quantized, prepare_weights,
                       quantize_activations_q8, select_rows)
from ..schemes import FORMATS, QuantizedTensor, make_tensor

BLOCK_FORMATS = [name for name, layout in FORMATS.items() if not layout.is_float]


def _weights(values, layout, name='blk.0.attn_q.weight'):
    values = np.asarray(values, dtype=np.float32)
    return QuantizedTensor(name, layout, values.shape, FORMATS[layout],
                           quantize_array(values, layout))


def _decoded(weights):
    return dequantize_payload(weights.payload, weights.layout, weights.shape)


def test_activation_row_dequantizes_closely(rng):
    row = rng.standard_normal(256).astype(np.float32)
    activations = quantize_activations_q8(row)
    assert activations.codes.dtype == np.int8
    assert activations.codes.shape == (8, 32)
    decoded = (activations.scales[:, np.newaxis] * activations.codes).ravel()
    assert np.max(np.abs(decoded - row)) <= np.max(np.abs(activations.scales)) + 1e-6


def test_activation_quantization_is_a_fixed_point(rng):
    row = rng.standard_normal(64).astype(np.float32)
    first = quantize_activations_q8(row)
    decoded = (first.scales[:, np.newaxis] * first.codes).ravel()
    second = quantize_activations_q8(decoded)
    np.testing.assert_array_equal(first.codes, second.codes)
    np.testing.assert_array_equal(first.scales, second.scales)


def test_activation_errors():
    with pytest.raises(ShapeError):
        quantize_activations_q8(np.ones(48))
    with pytest.raises(QuantizationError):
        quantize_activations_q8(np.full(32, np.inf))


def test_every_format_has_a_kernel():
    assert set(KERNELS) == set(FORMATS)


@pytest.mark.parametrize('layout', BLOCK_FORMATS)
def test_matvec_matches_the_integer_reference(layout, rng):
    values = rng.standard_normal((48, 512)) / np.sqrt(512)
    weights = _weights(values, layout)
    x = rng.standard_normal(512).astype(np.float32)
    activations = quantize_activations_q8(x)
    x_deq = (activations.scales[:, np.newaxis] * activations.codes).ravel()
    expected = _decoded(weights).astype(np.float64) @ x_deq.astype(np.float64)
    np.testing.assert_allclose(matvec_quantized(weights, x), expected,
                               rtol=1e-4, atol=1e-4)


@pytest.mark.parametrize('layout', sorted(KERNELS))
def test_matvec_matches_the_dequantize_oracle(layout, rng):
    for _ in range(20):
        n_rows = int(rng.integers(1, 40))
        n_cols = 256 * int(rng.integers(1, 4))
        values = 0.02 * rng.standard_normal((n_rows, n_cols))
        weights = _weights(values, layout)
        x = rng.standard_normal(n_cols).astype(np.float32)
        oracle = _decoded(weights).astype(np.float64) @ x.astype(np.float64)
        y = matvec_quantized(weights, x)
        assert y.dtype == np.float32
        assert y.shape == (n_rows,)
        tolerance = 1e-2 * np.abs(oracle) + 1e-3 * np.linalg.norm(x)
        assert np.all(np.abs(y - oracle) <= tolerance)


@pytest.mark.slow
def test_q4_k_m_rows_on_a_square_llama_matrix(rng):
    tensor = make_tensor('blk.0.attn_q.weight',
                         0.02 * rng.standard_normal((4096, 4096)))
    weights = quantize_tensor(tensor, 'Q4_K_M', n_layers=32)
    x = rng.standard_normal(4096).astype(np.float32)
    oracle = _decoded(weights).astype(np.float64) @ x.astype(np.float64)
    y = matvec_quantized(weights, x, n_threads=4)
    rms = np.sqrt(np.mean(oracle**2))
    assert np.max(np.abs(y - oracle)) / rms < 5e-2


def test_prepared_weights_give_the_same_result(rng):
    weights = _weights(0.02 * rng.standard_normal((70, 512)), 'Q3_K')
    x = rng.standard_normal(512).astype(np.float32)
    operand = prepare_weights(weights)
    assert operand.codes.dtype == np.int8
    assert prepare_weights(operand) is operand
    np.testing.assert_array_equal(matvec_quantized(operand, x), matvec_quantized(weights, x))


def test_identity_matrix_returns_the_input(rng):
    weights = _weights(np.eye(256), 'Q8_0')
    x = rng.uniform(-1., 1., 256).astype(np.float32)
    np.testing.assert_allclose(matvec_quantized(weights, x), x, atol=1e-2)


def test_q4_k_rows_on_a_wide_matrix(rng):
    values = rng.standard_normal((1024, 4096)) / 64.
    weights = _weights(values, 'Q4_K')
    x = rng.standard_normal(4096).astype(np.float32)
    exact = values @ x
    y = matvec_quantized(weights, x, n_threads=4)
    assert np.linalg.norm(y - exact) / np.linalg.norm(exact) < 0.12


def test_result_does_not_depend_on_threads(rng):
    weights = _weights(rng.standard_normal((300, 512)) / 20., 'Q5_K')
    x = rng.standard_normal(512).astype(np.float32)
    serial = matvec_quantized(weights, x, n_threads=1)
    with ThreadPoolExecutor(max_workers=3) as executor:
        pooled = matvec_quantized(weights, x, n_threads=3, executor=executor)
    np.testing.assert_array_equal(serial, pooled)


@pytest.mark.parametrize('layout', ['F32', 'F16'])
def test_float_weights(layout, rng):
    values = rng.standard_normal((20, 64)).astype(np.float32)
    weights = _weights(values, layout)
    x = rng.standard_normal(64).astype(np.float32)
    np.testing.assert_allclose(matvec_quantized(weights, x), _decoded(weights) @ x,
                               rtol=1e-5, atol=1e-5)


def test_missing_kernel_needs_fallback(monkeypatch, rng):
    weights = _weights(rng.standard_normal((4, 256)), 'Q6_K')
    x = rng.standard_normal(256).astype(np.float32)
    monkeypatch.delitem(KERNELS, 'Q6_K')
    with pytest.raises(UnsupportedKernelError):
        matvec_quantized(weights, x)
    np.testing.assert_allclose(matvec_quantized(weights, x, allow_fallback=True),
                               _decoded(weights) @ x, rtol=1e-5, atol=1e-5)


def test_shape_errors(rng):
    weights = _weights(rng.standard_normal((4, 64)), 'Q8_0')
    with pytest.raises(ShapeError):
        matvec_quantized(weights, np.ones(32))
    with pytest.raises(ShapeError):
        matmul_quantized(weights, np.ones((3, 32)))
    vector = _weights(rng.standard_normal(64), 'Q8_0', name='output_norm.weight')
    with pytest.raises(ShapeError):
        matvec_quantized(vector, np.ones(64))


def test_matmul_matches_decoded_product(rng):
    values = rng.standard_normal((600, 256)) / 16.
    weights = _weights(values, 'Q4_0')
    batch = rng.standard_normal((5, 256)).astype(np.float32)
    np.testing.assert_allclose(matmul_quantized(weights, batch, n_threads=2),
                               batch @ _decoded(weights).T, rtol=1e-5, atol=1e-5)


def test_select_rows_decodes_embeddings(rng):
    values = rng.standard_normal((10, 256))
    for layout in ('F16', 'Q6_K'):
        weights = _weights(values, layout)
        np.testing.assert_array_equal(select_rows(weights, [3, 0, 3]),
                                      _decoded(weights)[[3, 0, 3]])
