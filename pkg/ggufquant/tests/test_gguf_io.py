# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: test_gguf_io.py

import io
import struct

import numpy as np
import pytest

from ..exceptions import (BadMagicError, DuplicateTensorError, MalformedFileError,
                          MisalignedTensorError, OverlappingTensorsError, PayloadError,
                          TruncatedFileError, UnsupportedTensorTypeError,
                          UnsupportedVersionError)
from ..gguf_io import (DEFAULT_ALIGNMENT, GGUFModel, ValueType, inventory_from_model,
                       metadata_as_plain, model_summary, predict_file_size, read_gguf,
                       tensor_checksums, tensor_table, write_gguf)
from ..quantize import convert
from ..schemes import predict_model_bytes


def _to_bytes(model):
    sink = io.BytesIO()
    n_bytes = write_gguf(model, sink)
    assert n_bytes == len(sink.getvalue())
    return sink.getvalue()


def _small_model(rng, layouts=('F32', 'Q4_0', 'Q8_0')):
    model = GGUFModel(metadata=[('general.architecture', 'llama'),
                                ('general.name', 'small')])
    for index, layout in enumerate(layouts):
        model.add_array('blk.0.ffn_up.weight' if index == 0 else
                        'blk.{}.attn_q.weight'.format(index),
                        rng.standard_normal((2 + index, 64)), layout)
    return model


def _offset_position(data, name, n_dims):
    """Byte position of the offset field in the directory entry of `name`."""
    encoded = name.encode('utf-8')
    start = data.index(struct.pack('<Q', len(encoded)) + encoded) + 8 + len(encoded)
    return start + 4 + 8 * n_dims + 4


def test_round_trip_is_byte_identical(tiny_model):
    data = _to_bytes(tiny_model)
    model = read_gguf(data)
    assert model == tiny_model
    assert _to_bytes(model) == data


def test_round_trip_through_a_file(tmp_path, tiny_model):
    path = str(tmp_path / 'model.gguf')
    n_bytes = write_gguf(tiny_model, path)
    model = read_gguf(path)
    assert model == tiny_model
    assert n_bytes == predict_file_size(tiny_model)
    assert tensor_checksums(model) == tensor_checksums(tiny_model)
    with open(path, 'rb') as file:
        assert read_gguf(file) == tiny_model


def test_metadata_values_keep_their_types():
    model = GGUFModel(metadata=[
        ('text', 'ünïcode'), ('count', 7), ('negative', -3), ('big', 2**40),
        ('ratio', 0.1), ('flag', True), ('names', ['a', 'b']), ('ids', [1, 2, 3]),
        ('nested', [[1, 2], [3]]), ('empty', [])])
    model.set('small', 5, value_type=ValueType.UINT8)
    model.set('precise', 0.1, value_type=ValueType.FLOAT64)
    again = read_gguf(_to_bytes(model))
    assert again.metadata == model.metadata
    plain = metadata_as_plain(again)
    assert plain['count'] == {'type': 'UINT32', 'value': 7}
    assert plain['negative']['type'] == 'INT32'
    assert plain['big']['type'] == 'UINT64'
    assert plain['small']['type'] == 'UINT8'
    assert plain['ratio']['value'] == pytest.approx(0.1, rel=1e-7)
    assert again.get('precise') == 0.1
    assert plain['nested']['value'] == [[1, 2], [3]]


def test_metadata_only_file_round_trips():
    model = GGUFModel(metadata={'general.name': 'empty'})
    data = _to_bytes(model)
    again = read_gguf(data)
    assert again.tensors == []
    assert again.get('general.name') == 'empty'
    assert _to_bytes(again) == data


def test_payload_offsets_are_aligned(rng):
    model = _small_model(rng)
    again = read_gguf(_to_bytes(model))
    offsets = [entry.offset for entry in again.tensors]
    assert offsets == sorted(offsets)
    assert all(offset % DEFAULT_ALIGNMENT == 0 for offset in offsets)


def test_alignment_key_is_honoured(rng):
    model = _small_model(rng)
    model.set('general.alignment', 64)
    again = read_gguf(_to_bytes(model))
    assert again.alignment == 64
    assert all(entry.offset % 64 == 0 for entry in again.tensors)
    assert again == model


def test_single_q4_0_block_tensor(rng):
    model = GGUFModel()
    model.add_array('blk.0.attn_q.weight', rng.standard_normal((1, 32)), 'Q4_0')
    data = _to_bytes(model)
    assert model.data_nbytes == 18
    assert len(data) % DEFAULT_ALIGNMENT == 18
    assert read_gguf(data).tensors[0].payload.size == 18


def test_dimensions_are_stored_innermost_first(rng):
    model = GGUFModel()
    model.add_array('blk.0.attn_q.weight', rng.standard_normal((3, 64)), 'F16')
    data = _to_bytes(model)
    position = _offset_position(data, 'blk.0.attn_q.weight', 2) - 4 - 16
    assert struct.unpack_from('<QQ', data, position) == (64, 3)
    assert read_gguf(data).tensors[0].shape == (3, 64)


def test_conversion_output_keeps_checksums(tiny_model):
    converted, _ = convert(tiny_model, 'Q4_K_M')
    again = read_gguf(_to_bytes(converted))
    assert tensor_checksums(again) == tensor_checksums(converted)
    assert again.data_nbytes == predict_model_bytes(inventory_from_model(tiny_model),
                                                    'Q4_K_M')


def test_duplicate_tensor_names_are_rejected(rng):
    model = _small_model(rng, layouts=('F32',))
    entry = model.tensors[0]
    model.add_tensor(entry.name, entry.payload, entry.layout, entry.shape)
    with pytest.raises(DuplicateTensorError):
        write_gguf(model, io.BytesIO())


def test_payload_size_is_checked_on_add():
    model = GGUFModel()
    with pytest.raises(PayloadError):
        model.add_tensor('blk.0.attn_q.weight', np.zeros(17, dtype=np.uint8), 'Q4_0',
                         (1, 32))


def test_bad_magic(rng):
    data = bytearray(_to_bytes(_small_model(rng)))
    data[:4] = b'GGUX'
    with pytest.raises(BadMagicError):
        read_gguf(bytes(data))
    with pytest.raises(BadMagicError):
        read_gguf(b'')


def test_unsupported_version(rng):
    data = bytearray(_to_bytes(_small_model(rng)))
    data[4:8] = struct.pack('<I', 4)
    with pytest.raises(UnsupportedVersionError):
        read_gguf(bytes(data))


def test_version_2_files_are_readable(rng):
    model = _small_model(rng)
    data = bytearray(_to_bytes(model))
    data[4:8] = struct.pack('<I', 2)
    again = read_gguf(bytes(data))
    assert again.version == 2
    assert again == model


def test_truncation_inside_the_directory_names_the_tensor(rng):
    model = _small_model(rng)
    data = _to_bytes(model)
    cut = _offset_position(data, 'blk.2.attn_q.weight', 2) + 3
    with pytest.raises(TruncatedFileError) as error:
        read_gguf(data[:cut])
    assert error.value.section == 'directory'
    assert error.value.tensor_index == 2
    assert 'tensor 2' in str(error.value)


def test_truncation_inside_the_metadata(rng):
    data = _to_bytes(_small_model(rng))
    with pytest.raises(TruncatedFileError) as error:
        read_gguf(data[:30])
    assert error.value.section == 'metadata'


def test_truncated_payload(rng):
    data = _to_bytes(_small_model(rng))
    with pytest.raises(TruncatedFileError) as error:
        read_gguf(data[:-5])
    assert error.value.section == 'payload'
    assert error.value.tensor_index == 2


def test_overlapping_tensors(rng):
    data = bytearray(_to_bytes(_small_model(rng)))
    position = _offset_position(data, 'blk.1.attn_q.weight', 2)
    data[position:position + 8] = struct.pack('<Q', 0)
    with pytest.raises(OverlappingTensorsError):
        read_gguf(bytes(data))


def test_misaligned_tensor(rng):
    data = bytearray(_to_bytes(_small_model(rng)))
    position = _offset_position(data, 'blk.2.attn_q.weight', 2)
    offset = struct.unpack_from('<Q', data, position)[0]
    data[position:position + 8] = struct.pack('<Q', offset + 2)
    with pytest.raises(MisalignedTensorError):
        read_gguf(bytes(data))


def test_unsupported_tensor_type(rng):
    data = bytearray(_to_bytes(_small_model(rng)))
    position = _offset_position(data, 'blk.1.attn_q.weight', 2) - 4
    data[position:position + 4] = struct.pack('<I', 99)
    with pytest.raises(UnsupportedTensorTypeError):
        read_gguf(bytes(data))


def test_unknown_metadata_value_type():
    data = bytearray(_to_bytes(GGUFModel(metadata={'key': 1})))
    position = data.index(b'key') + 3
    data[position:position + 4] = struct.pack('<I', 42)
    with pytest.raises(MalformedFileError, match="key 'key' has unknown value type 42"):
        read_gguf(bytes(data))


def test_inspection_helpers(tiny_model):
    summary = model_summary(tiny_model)
    assert summary['n_tensors'] == len(tiny_model.tensors)
    assert summary['formats'] == {'F16': 16, 'F32': 5}
    assert summary['file_mib'] > summary['data_mib']
    table = tensor_table(tiny_model)
    assert len(table) == len(tiny_model.tensors)
    assert table['bpw'][0] == pytest.approx(16.)
    inventory = inventory_from_model(tiny_model)
    assert inventory.n_layers == 2
