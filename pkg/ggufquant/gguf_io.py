# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: gguf_io.py
"""Reading and writing of GGUF containers.

Layout (all integers little-endian)::

    magic 'GGUF' | u32 version | u64 n_tensors | u64 n_kv
    n_kv   x (string key | u32 value type | value)
    n_tensors x (string name | u32 n_dims | u64 dims[n_dims] | u32 type | u64 offset)
    zero padding to the alignment
    tensor data, every tensor starting at an aligned offset relative to the data start

Dimensions are stored innermost first (``dims[0]`` is the contiguous one);
`TensorEntry.shape` is row-major, i.e. the reverse.
"""

import collections
import hashlib
import io
import os
import struct

import numpy as np

from astropy.table import Table

from .block_codecs import as_byte_array, dequantize_payload, quantize_array
from .exceptions import (BadMagicError, DuplicateTensorError, InputError,
                         MalformedFileError, MisalignedTensorError,
                         OverlappingTensorsError, PayloadError, SchemeError,
                         ShapeError, TruncatedFileError,
                         UnsupportedTensorTypeError, UnsupportedVersionError)
from .schemes import (FORMATS_BY_TYPE_ID, MIB, classify_tensor, get_format,
                      make_inventory, n_elements, tensor_nbytes)

GGUF_MAGIC = 0x46554747  # b'GGUF' read as little-endian u32
GGUF_VERSION = 3
READABLE_VERSIONS = (2, 3)
DEFAULT_ALIGNMENT = 32
ALIGNMENT_KEY = 'general.alignment'


class ValueType(object):
    UINT8 = 0
    INT8 = 1
    UINT16 = 2
    INT16 = 3
    UINT32 = 4
    INT32 = 5
    FLOAT32 = 6
    BOOL = 7
    STRING = 8
    ARRAY = 9
    UINT64 = 10
    INT64 = 11
    FLOAT64 = 12


SCALAR_FORMATS = {
    ValueType.UINT8: '<B',
    ValueType.INT8: '<b',
    ValueType.UINT16: '<H',
    ValueType.INT16: '<h',
    ValueType.UINT32: '<I',
    ValueType.INT32: '<i',
    ValueType.FLOAT32: '<f',
    ValueType.BOOL: '<?',
    ValueType.UINT64: '<Q',
    ValueType.INT64: '<q',
    ValueType.FLOAT64: '<d',
}

VALUE_TYPE_NAMES = {code: name for name, code in vars(ValueType).items()
                    if not name.startswith('_')}

MetadataValue = collections.namedtuple('MetadataValue', ['type', 'value', 'item_type'])
MetadataValue.__new__.__defaults__ = (None,)

TensorEntry = collections.namedtuple('TensorEntry', [
    'name', 'shape', 'layout', 'payload', 'offset'])
TensorEntry.__new__.__defaults__ = (None,)


def infer_value_type(value):
    """GGUF value type used for a plain python value."""
    if isinstance(value, (bool, np.bool_)):
        return ValueType.BOOL
    if isinstance(value, (int, np.integer)):
        if 0 <= value < 2**32:
            return ValueType.UINT32
        if -2**31 <= value < 0:
            return ValueType.INT32
        return ValueType.UINT64 if value >= 0 else ValueType.INT64
    if isinstance(value, (float, np.floating)):
        return ValueType.FLOAT32
    if isinstance(value, str):
        return ValueType.STRING
    if isinstance(value, (list, tuple)):
        return ValueType.ARRAY
    raise MalformedFileError('cannot store a value of type {} as GGUF metadata'.format(
        type(value).__name__))


def make_value(value, value_type=None, item_type=None):
    """Wrap a python value as a typed `MetadataValue`."""
    if isinstance(value, MetadataValue):
        return value
    if value_type is None:
        value_type = infer_value_type(value)
    if value_type == ValueType.ARRAY:
        value = list(value)
        if item_type is None:
            item_type = infer_value_type(value[0]) if value else ValueType.STRING
        if item_type == ValueType.ARRAY:
            value = [make_value(item) for item in value]
        elif item_type == ValueType.FLOAT32:
            value = [float(np.float32(item)) for item in value]
        return MetadataValue(value_type, value, item_type)
    if value_type == ValueType.FLOAT32:
        # stored values are float32, keep the in-memory value identical
        value = float(np.float32(value))
    return MetadataValue(value_type, value)


def align(position, alignment):
    return position + (alignment - position % alignment) % alignment


class GGUFModel(object):
    """Typed metadata plus a list of tensors with their raw payloads.

    Parameters
    ----------
    metadata : dict or list of (key, value)
        Keys mapped to `MetadataValue` records or plain python values.
    tensors : list of TensorEntry
    version : int
        Version the model was read with; files are always written as version 3.

    """

    def __init__(self, metadata=None, tensors=None, version=GGUF_VERSION):
        self.metadata = collections.OrderedDict()
        metadata = metadata or ()
        if hasattr(metadata, 'items'):
            metadata = metadata.items()
        for key, value in metadata:
            self.set(key, value)
        self.tensors = list(tensors or [])
        self.version = version

    def __repr__(self):
        return 'GGUFModel({} metadata keys, {} tensors)'.format(
            len(self.metadata), len(self.tensors))

    def __eq__(self, other):
        if not isinstance(other, GGUFModel):
            return NotImplemented
        if self.metadata != other.metadata or len(self.tensors) != len(other.tensors):
            return False
        for mine, theirs in zip(self.tensors, other.tensors):
            if (mine.name, tuple(mine.shape), mine.layout.name) != (
                    theirs.name, tuple(theirs.shape), theirs.layout.name):
                return False
            if not np.array_equal(mine.payload, theirs.payload):
                return False
        return True

    def __ne__(self, other):
        equal = self.__eq__(other)
        return equal if equal is NotImplemented else not equal

    @property
    def alignment(self):
        if ALIGNMENT_KEY in self.metadata:
            return int(self.metadata[ALIGNMENT_KEY].value)
        return DEFAULT_ALIGNMENT

    @property
    def tensor_names(self):
        return [entry.name for entry in self.tensors]

    @property
    def data_nbytes(self):
        return sum(entry.payload.size for entry in self.tensors)

    def get(self, key, default=None):
        """Plain value of a metadata key."""
        if key not in self.metadata:
            return default
        return self.metadata[key].value

    def set(self, key, value, value_type=None):
        self.metadata[key] = make_value(value, value_type)

    def tensor(self, name):
        for entry in self.tensors:
            if entry.name == name:
                return entry
        raise KeyError(name)

    def add_tensor(self, name, payload, layout, shape):
        """Append a tensor given its packed payload."""
        layout = get_format(layout)
        shape = tuple(int(dim) for dim in shape)
        payload = as_byte_array(payload)
        expected = tensor_nbytes(shape, layout, name=name)
        if payload.size != expected:
            raise PayloadError("tensor '{}': {} payload has {} bytes, expected {}".format(
                name, layout.name, payload.size, expected))
        self.tensors.append(TensorEntry(name, shape, layout, payload))

    def add_array(self, name, values, layout='F32'):
        """Append a tensor by encoding float values into `layout`."""
        values = np.asarray(values, dtype=np.float32)
        self.add_tensor(name, quantize_array(values, layout, name=name), layout,
                        values.shape)

    def tensor_values(self, name):
        entry = self.tensor(name)
        return dequantize_payload(entry.payload, entry.layout, entry.shape, name=name)

    def n_layers(self):
        """Depth from `<arch>.block_count`, else from the highest layer index."""
        architecture = self.get('general.architecture')
        if architecture is not None:
            block_count = self.get('{}.block_count'.format(architecture))
            if block_count is not None:
                return int(block_count)
        layers = []
        for name in self.tensor_names:
            try:
                layer = classify_tensor(name)[1]
            except SchemeError:
                continue
            if layer is not None:
                layers.append(layer)
        return max(layers) + 1 if layers else 0


# ---- writing ---------------------------------------------------------------

def _write_string(buffer, text):
    encoded = text.encode('utf-8')
    buffer.write(struct.pack('<Q', len(encoded)))
    buffer.write(encoded)


def _write_value(buffer, value_type, value, item_type=None):
    if value_type in SCALAR_FORMATS:
        buffer.write(struct.pack(SCALAR_FORMATS[value_type], value))
    elif value_type == ValueType.STRING:
        _write_string(buffer, value)
    elif value_type == ValueType.ARRAY:
        buffer.write(struct.pack('<IQ', item_type, len(value)))
        for item in value:
            if item_type == ValueType.ARRAY:
                _write_value(buffer, item.type, item.value, item.item_type)
            else:
                _write_value(buffer, item_type, item)
    else:
        raise MalformedFileError('unknown metadata value type {}'.format(value_type))


def _tensor_offsets(model):
    offsets, position = [], 0
    for entry in model.tensors:
        position = align(position, model.alignment)
        offsets.append(position)
        position += entry.payload.size
    return offsets, position


def _header_bytes(model, offsets):
    buffer = io.BytesIO()
    buffer.write(struct.pack('<IIQQ', GGUF_MAGIC, GGUF_VERSION, len(model.tensors),
                             len(model.metadata)))
    for key, item in model.metadata.items():
        _write_string(buffer, key)
        buffer.write(struct.pack('<I', item.type))
        _write_value(buffer, item.type, item.value, item.item_type)
    for entry, offset in zip(model.tensors, offsets):
        _write_string(buffer, entry.name)
        buffer.write(struct.pack('<I', len(entry.shape)))
        for dim in reversed(entry.shape):
            buffer.write(struct.pack('<Q', dim))
        buffer.write(struct.pack('<IQ', entry.layout.type_id, offset))
    return buffer.getvalue()


def _check_names(model):
    seen = set()
    for entry in model.tensors:
        if entry.name in seen:
            raise DuplicateTensorError("duplicate tensor name '{}'".format(entry.name))
        seen.add(entry.name)


def predict_file_size(model):
    """Exact number of bytes `write_gguf` produces for `model`."""
    offsets, data_end = _tensor_offsets(model)
    return align(len(_header_bytes(model, offsets)), model.alignment) + data_end


def write_gguf(model, sink):
    """Serialize a model.

    Parameters
    ----------
    model : GGUFModel
    sink : str or binary file object
        Output path or an object with a `write` method.

    Returns
    -------
    n_bytes : int
        Number of bytes written.

    """
    _check_names(model)
    offsets, _ = _tensor_offsets(model)
    header = _header_bytes(model, offsets)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, 'wb') as file:
            return _write_body(model, file, header, offsets)
    return _write_body(model, sink, header, offsets)


def _write_body(model, file, header, offsets):
    data_start = align(len(header), model.alignment)
    file.write(header)
    file.write(b'\x00' * (data_start - len(header)))
    position = 0
    for entry, offset in zip(model.tensors, offsets):
        file.write(b'\x00' * (offset - position))
        file.write(np.ascontiguousarray(entry.payload).tobytes())
        position = offset + entry.payload.size
    return data_start + position


# ---- reading ---------------------------------------------------------------

class _Cursor(object):
    """Sequential reader over a byte buffer with truncation reporting."""

    def __init__(self, buffer):
        self.buffer = buffer
        self.size = len(buffer)
        self.position = 0
        self.section = 'header'
        self.tensor_index = None
        self.key = None

    def take(self, n_bytes):
        if self.position + n_bytes > self.size:
            where = 'the {}'.format(self.section)
            if self.tensor_index is not None:
                where += ' entry of tensor {}'.format(self.tensor_index)
            raise TruncatedFileError(
                'file ends after {} bytes, inside {}'.format(self.size, where),
                section=self.section, tensor_index=self.tensor_index)
        start = self.position
        self.position += n_bytes
        return start

    def unpack(self, fmt):
        start = self.take(struct.calcsize(fmt))
        return struct.unpack_from(fmt, self.buffer, start)[0]

    def string(self):
        length = self.unpack('<Q')
        start = self.take(length)
        try:
            return bytes(self.buffer[start:start + length]).decode('utf-8')
        except UnicodeDecodeError:
            raise MalformedFileError('invalid UTF-8 string at byte {}'.format(start))

    def value(self, value_type):
        if value_type in SCALAR_FORMATS:
            return MetadataValue(value_type, self.unpack(SCALAR_FORMATS[value_type]))
        if value_type == ValueType.STRING:
            return MetadataValue(value_type, self.string())
        if value_type == ValueType.ARRAY:
            item_type = self.unpack('<I')
            count = self.unpack('<Q')
            items = [self.value(item_type) for _ in range(count)]
            if item_type != ValueType.ARRAY:
                items = [item.value for item in items]
            return MetadataValue(value_type, items, item_type)
        # the length of a value of unknown type cannot be determined
        raise MalformedFileError(
            "metadata key '{}' has unknown value type {} at byte {}; the rest of the "
            'file cannot be located'.format(self.key, value_type, self.position - 4))


def _open_buffer(source):
    if isinstance(source, (bytes, bytearray, memoryview)):
        return memoryview(source).cast('B'), np.frombuffer(source, dtype=np.uint8)
    if isinstance(source, (str, os.PathLike)):
        if not os.path.isfile(source):
            raise InputError("GGUF file '{}' does not exist".format(source))
        if os.path.getsize(source) == 0:
            return memoryview(b''), np.zeros(0, dtype=np.uint8)
        data = np.memmap(source, dtype=np.uint8, mode='r')
        return memoryview(data), data
    raw = source.read()
    return memoryview(raw), np.frombuffer(raw, dtype=np.uint8)


def read_gguf(source):
    """Parse a GGUF container.

    Parameters
    ----------
    source : str, bytes or binary file object
        Paths are memory mapped; tensor payloads are views into the mapping and
        are only paged in when used.

    Returns
    -------
    GGUFModel

    """
    buffer, data = _open_buffer(source)
    cursor = _Cursor(buffer)

    if cursor.size < 4 or cursor.unpack('<I') != GGUF_MAGIC:
        raise BadMagicError("missing 'GGUF' magic at offset 0")
    version = cursor.unpack('<I')
    if version not in READABLE_VERSIONS:
        raise UnsupportedVersionError('GGUF version {} is not supported (readable: {})'.format(
            version, ', '.join(map(str, READABLE_VERSIONS))))
    n_tensors = cursor.unpack('<Q')
    n_kv = cursor.unpack('<Q')

    cursor.section = 'metadata'
    model = GGUFModel(version=version)
    for _ in range(n_kv):
        key = cursor.key = cursor.string()
        model.metadata[key] = cursor.value(cursor.unpack('<I'))
    alignment = model.alignment
    if alignment <= 0:
        raise MalformedFileError('invalid alignment {}'.format(alignment))

    cursor.section = 'directory'
    directory = []
    for index in range(n_tensors):
        cursor.tensor_index = index
        name = cursor.string()
        n_dims = cursor.unpack('<I')
        dims = [cursor.unpack('<Q') for _ in range(n_dims)]
        type_id = cursor.unpack('<I')
        offset = cursor.unpack('<Q')
        if type_id not in FORMATS_BY_TYPE_ID:
            raise UnsupportedTensorTypeError(
                "tensor {} '{}' has unsupported type id {}".format(index, name, type_id))
        directory.append((index, name, tuple(reversed(dims)),
                          FORMATS_BY_TYPE_ID[type_id], offset))
    cursor.tensor_index = None

    data_start = align(cursor.position, alignment)
    previous = None
    for index, name, shape, layout, offset in sorted(directory, key=lambda item: item[4]):
        if offset % alignment:
            raise MisalignedTensorError(
                "tensor {} '{}' starts at offset {}, not a multiple of {}".format(
                    index, name, offset, alignment))
        if previous is not None and offset < previous[1]:
            raise OverlappingTensorsError(
                "tensor {} '{}' at offset {} overlaps tensor '{}' ending at {}".format(
                    index, name, offset, previous[0], previous[1]))
        try:
            nbytes = tensor_nbytes(shape, layout, name=name)
        except ShapeError as error:
            raise MalformedFileError(str(error))
        if data_start + offset + nbytes > cursor.size:
            raise TruncatedFileError(
                "payload of tensor {} '{}' ends at byte {}, file has {}".format(
                    index, name, data_start + offset + nbytes, cursor.size),
                section='payload', tensor_index=index)
        previous = (name, offset + nbytes)

    for index, name, shape, layout, offset in directory:
        start = data_start + offset
        payload = data[start:start + tensor_nbytes(shape, layout)]
        model.tensors.append(TensorEntry(name, shape, layout, payload, offset))
    return model


# ---- inspection ------------------------------------------------------------

def tensor_checksums(model):
    """sha256 of every tensor payload, keyed by tensor name."""
    return collections.OrderedDict(
        (entry.name, hashlib.sha256(np.ascontiguousarray(entry.payload)).hexdigest())
        for entry in model.tensors)


def tensor_table(model):
    """Per-tensor overview: shape, type, bytes and bits per weight."""
    table = Table(names=('name', 'shape', 'type', 'n_elements', 'nbytes', 'bpw'),
                  dtype=('U64', 'U32', 'U8', 'i8', 'i8', 'f8'))
    for entry in model.tensors:
        count = n_elements(entry.shape)
        table.add_row((entry.name, 'x'.join(map(str, entry.shape)), entry.layout.name,
                       count, entry.payload.size, 8. * entry.payload.size / count))
    return table


def model_summary(model):
    """Totals of a model: tensor count, weights, sizes, mean bpw, format counts."""
    n_weights = sum(n_elements(entry.shape) for entry in model.tensors)
    counts = collections.Counter(entry.layout.name for entry in model.tensors)
    return collections.OrderedDict([
        ('version', model.version),
        ('n_metadata', len(model.metadata)),
        ('n_tensors', len(model.tensors)),
        ('n_weights', n_weights),
        ('data_mib', model.data_nbytes / MIB),
        ('file_mib', predict_file_size(model) / MIB),
        ('bpw', 8. * model.data_nbytes / n_weights if n_weights else 0.),
        ('formats', collections.OrderedDict(sorted(counts.items()))),
    ])


def inventory_from_model(model):
    """Tensor inventory (names, shapes, stored types) of a model."""
    return make_inventory([(entry.name, entry.shape, entry.layout.name)
                           for entry in model.tensors],
                          n_layers=model.n_layers() or None,
                          meta={'architecture': model.get('general.architecture')})


def metadata_as_plain(model):
    """Metadata as JSON friendly {key: {'type': name, 'value': value}}."""
    def plain(item):
        if item.type == ValueType.ARRAY and item.item_type == ValueType.ARRAY:
            return [plain(sub) for sub in item.value]
        return item.value

    return collections.OrderedDict(
        (key, {'type': VALUE_TYPE_NAMES[item.type], 'value': plain(item)})
        for key, item in model.metadata.items())
