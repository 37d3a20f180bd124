# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: schemes.py
"""Scheme registry, block layouts, tensor roles and size accounting."""

import collections
import os
import re

import numpy as np

from astropy.io import ascii

from .exceptions import InputError, SchemeError, ShapeError

MIB = 1024 * 1024

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')
LLAMA_INVENTORY = os.path.join(DATA_DIR, 'llama-3.1-8b.inventory')
DEFAULT_MIX_RULES = os.path.join(DATA_DIR, 'mix_rules.ini')
INVENTORY_VERSION = 1

# F16 size of the reference model in MiB, used as the reduction baseline.
F16_REFERENCE_MIB = 15317.02


class FormatLayout(collections.namedtuple('FormatLayout', [
        'name', 'type_id', 'block_weights', 'block_bytes', 'code_bits',
        'has_offset', 'sub_blocks', 'scale_bits', 'min_bits'])):
    """Storage layout of one ggml tensor type.

    Attributes
    ----------
    name : str
        ggml type name ('Q4_0', 'Q6_K', ...).
    type_id : int
        ggml type id written to the GGUF tensor directory.
    block_weights : int
        Number of weights sharing metadata (1 for F32/F16, 32 legacy, 256 K).
    block_bytes : int
        Bytes per block including all metadata.
    code_bits : int
        Bits per stored code (storage bits for float types).
    has_offset : bool
        True for affine layouts (scale and min), False for symmetric ones.
    sub_blocks : int
        Groups per block with their own scale (1 for legacy layouts).
    scale_bits, min_bits : int
        Width of the quantized sub-block scales and mins (K-quants only).

    """
    __slots__ = ()

    @property
    def bpw(self):
        return 8. * self.block_bytes / self.block_weights

    @property
    def is_float(self):
        return self.block_weights == 1

    @property
    def is_superblock(self):
        return self.block_weights == 256

    @property
    def group_size(self):
        return self.block_weights // self.sub_blocks

    @property
    def kind(self):
        if self.is_float:
            return 'float'
        if self.is_superblock:
            return 'superblock'
        return 'affine' if self.has_offset else 'symmetric'

    @property
    def code_range(self):
        """Smallest and largest integer code."""
        if self.has_offset:
            return 0, 2**self.code_bits - 1
        return -2**(self.code_bits - 1), 2**(self.code_bits - 1) - 1


FORMATS = collections.OrderedDict((layout.name, layout) for layout in [
    FormatLayout('F32', 0, 1, 4, 32, False, 1, 0, 0),
    FormatLayout('F16', 1, 1, 2, 16, False, 1, 0, 0),
    FormatLayout('Q4_0', 2, 32, 18, 4, False, 1, 0, 0),
    FormatLayout('Q4_1', 3, 32, 20, 4, True, 1, 0, 0),
    FormatLayout('Q5_0', 6, 32, 22, 5, False, 1, 0, 0),
    FormatLayout('Q5_1', 7, 32, 24, 5, True, 1, 0, 0),
    FormatLayout('Q8_0', 8, 32, 34, 8, False, 1, 0, 0),
    FormatLayout('Q3_K', 11, 256, 110, 3, False, 16, 6, 0),
    FormatLayout('Q4_K', 12, 256, 144, 4, True, 8, 6, 6),
    FormatLayout('Q5_K', 13, 256, 176, 5, True, 8, 6, 6),
    FormatLayout('Q6_K', 14, 256, 210, 6, False, 16, 8, 0),
])

FORMATS_BY_TYPE_ID = {layout.type_id: layout for layout in FORMATS.values()}

QuantScheme = collections.namedtuple('QuantScheme', [
    'id', 'family', 'nominal_bits', 'kind', 'base_format', 'file_type'])

SCHEMES = collections.OrderedDict((scheme.id, scheme) for scheme in [
    QuantScheme('F16', 'none', 16, 'float', 'F16', 1),
    QuantScheme('Q3_K_S', 'kquant', 3, 'superblock', 'Q3_K', 11),
    QuantScheme('Q3_K_M', 'kquant', 3, 'superblock', 'Q3_K', 12),
    QuantScheme('Q3_K_L', 'kquant', 3, 'superblock', 'Q3_K', 13),
    QuantScheme('Q4_0', 'legacy', 4, 'symmetric', 'Q4_0', 2),
    QuantScheme('Q4_1', 'legacy', 4, 'affine', 'Q4_1', 3),
    QuantScheme('Q4_K_S', 'kquant', 4, 'superblock', 'Q4_K', 14),
    QuantScheme('Q4_K_M', 'kquant', 4, 'superblock', 'Q4_K', 15),
    QuantScheme('Q5_0', 'legacy', 5, 'symmetric', 'Q5_0', 8),
    QuantScheme('Q5_1', 'legacy', 5, 'affine', 'Q5_1', 9),
    QuantScheme('Q5_K_S', 'kquant', 5, 'superblock', 'Q5_K', 16),
    QuantScheme('Q5_K_M', 'kquant', 5, 'superblock', 'Q5_K', 17),
    QuantScheme('Q6_K', 'kquant', 6, 'superblock', 'Q6_K', 18),
    QuantScheme('Q8_0', 'legacy', 8, 'symmetric', 'Q8_0', 7),
])

QUANTIZABLE_ROLES = ('token_embd', 'output', 'attn_q', 'attn_k', 'attn_v',
                     'attn_output', 'ffn_gate', 'ffn_up', 'ffn_down')
UNQUANTIZED_ROLES = ('norm', 'rope')
ROLES = QUANTIZABLE_ROLES + UNQUANTIZED_ROLES

_GLOBAL_NAMES = {
    'token_embd.weight': 'token_embd',
    'output.weight': 'output',
    'output_norm.weight': 'norm',
    'rope_freqs.weight': 'rope',
}
_LAYER_PATTERN = re.compile(
    r'^blk\.(\d+)\.(attn_q|attn_k|attn_v|attn_output|ffn_gate|ffn_up|ffn_down'
    r'|attn_norm|ffn_norm)\.weight$')

TensorInfo = collections.namedtuple('TensorInfo', [
    'name', 'shape', 'dtype', 'role', 'layer'])

Inventory = collections.namedtuple('Inventory', ['tensors', 'n_layers', 'meta'])

_default_mix_rules = None


def get_scheme(scheme):
    """Return the registry entry for a scheme id (or pass a QuantScheme through)."""
    if isinstance(scheme, QuantScheme):
        return scheme
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise SchemeError("unknown scheme '{}'; valid schemes: {}".format(
            scheme, ', '.join(SCHEMES)))


def get_format(name):
    if isinstance(name, FormatLayout):
        return name
    try:
        return FORMATS[name]
    except KeyError:
        raise SchemeError("unknown tensor format '{}'; valid formats: {}".format(
            name, ', '.join(FORMATS)))


def scheme_from_file_type(file_type):
    for scheme in SCHEMES.values():
        if scheme.file_type == file_type:
            return scheme
    return None


def classify_tensor(name):
    """Tensor role and layer index from a canonical llama tensor name.

    Returns
    -------
    (role, layer) : (str, int or None)

    """
    if name in _GLOBAL_NAMES:
        return _GLOBAL_NAMES[name], None
    match = _LAYER_PATTERN.match(name)
    if match is None:
        raise SchemeError("cannot derive a tensor role from name '{}'".format(name))
    layer, role = int(match.group(1)), match.group(2)
    if role in ('attn_norm', 'ffn_norm'):
        role = 'norm'
    return role, layer


def use_more_bits(layer, n_layers):
    return (layer < n_layers // 8 or layer >= 7 * n_layers // 8
            or (layer - n_layers // 8) % 3 == 2)


def parse_selector(selector):
    """'all', 'more_bits', 'first/<k>' or 'last/<k>' -> (kind, k)."""
    selector = selector.strip()
    if selector in ('all', 'more_bits'):
        return selector, None
    kind, _, denominator = selector.partition('/')
    if kind in ('first', 'last') and denominator.isdigit() and int(denominator) > 0:
        return kind, int(denominator)
    raise SchemeError("unknown layer selector '{}'".format(selector))


def selector_matches(selector, layer, n_layers):
    kind, denominator = parse_selector(selector)
    if kind == 'all':
        return True
    if layer is None:
        return False
    if n_layers is None:
        raise SchemeError(
            "selector '{}' needs the number of layers of the model".format(selector))
    if kind == 'more_bits':
        return use_more_bits(layer, n_layers)
    if kind == 'first':
        return layer < n_layers // denominator
    return layer >= n_layers - n_layers // denominator


def default_mix_rules():
    global _default_mix_rules
    if _default_mix_rules is None:
        from .config_file import read_mix_rules
        _default_mix_rules = read_mix_rules(DEFAULT_MIX_RULES)
    return _default_mix_rules


def resolve_layout(scheme, tensor_role, layer=None, n_layers=None, mix_rules=None):
    """Storage layout of a tensor role under a scheme.

    Parameters
    ----------
    scheme : str or QuantScheme
        Scheme id.
    tensor_role : str
        One of `ROLES`.
    layer : int or None
        Layer index for per-layer tensors; global tensors use None.
    n_layers : int or None
        Depth of the model; needed when a layer selector has to be evaluated.
    mix_rules : dict or None
        {scheme_id: {role: [(selector, format), ...]}}; the shipped rules when None.

    Returns
    -------
    FormatLayout

    """
    scheme = get_scheme(scheme)
    if tensor_role not in ROLES:
        raise SchemeError("unknown tensor role '{}'; valid roles: {}".format(
            tensor_role, ', '.join(ROLES)))
    if tensor_role in UNQUANTIZED_ROLES:
        return FORMATS['F32']
    if mix_rules is None:
        mix_rules = default_mix_rules()
    for selector, format_name in mix_rules.get(scheme.id, {}).get(tensor_role, ()):
        if selector_matches(selector, layer, n_layers):
            return get_format(format_name)
    return FORMATS[scheme.base_format]


def resolve_tensor_layout(scheme, name, n_layers=None, mix_rules=None):
    role, layer = classify_tensor(name)
    return resolve_layout(scheme, role, layer=layer, n_layers=n_layers,
                          mix_rules=mix_rules)


def n_elements(shape):
    return int(np.prod(shape, dtype=np.int64)) if len(shape) else 1


def tensor_nbytes(shape, layout, name=''):
    """Payload bytes of a tensor stored in `layout`."""
    layout = get_format(layout)
    if not len(shape) or any(int(dim) <= 0 for dim in shape):
        raise ShapeError("tensor '{}' has invalid shape {}".format(name, tuple(shape)))
    if int(shape[-1]) % layout.block_weights:
        raise ShapeError(
            "tensor '{}': contiguous dimension {} is not a multiple of the {} "
            "block size {}".format(name, shape[-1], layout.name,
                                   layout.block_weights))
    return n_elements(shape) // layout.block_weights * layout.block_bytes


def make_inventory(tensors, n_layers=None, meta=None):
    """Build an inventory from (name, shape) or (name, shape, dtype) items."""
    infos = []
    for item in tensors:
        name, shape = item[0], tuple(int(dim) for dim in item[1])
        role, layer = classify_tensor(name)
        if len(item) > 2:
            dtype = item[2]
        else:
            dtype = 'F32' if role in UNQUANTIZED_ROLES else 'F16'
        infos.append(TensorInfo(name, shape, dtype, role, layer))
    if n_layers is None:
        layers = [info.layer for info in infos if info.layer is not None]
        n_layers = max(layers) + 1 if layers else 0
    return Inventory(infos, n_layers, dict(meta or {}))


def load_inventory(path=LLAMA_INVENTORY):
    """Read a versioned tensor inventory data file.

    The file is a whitespace separated table with the columns `name`, `dtype`
    and `shape` (dimensions joined by 'x', row-major) preceded by '# key: value'
    header comments; `version` is required.
    """
    table = ascii.read(path, format='basic')
    meta = {}
    for comment in table.meta.get('comments', []):
        key, sep, value = comment.partition(':')
        if sep:
            meta[key.strip()] = value.strip()
    if meta.get('version') != str(INVENTORY_VERSION):
        raise InputError("inventory '{}' has unsupported version {}".format(
            path, meta.get('version')))
    tensors = [(str(row['name']), [int(dim) for dim in str(row['shape']).split('x')],
                str(row['dtype'])) for row in table]
    n_layers = int(meta['n_layers']) if 'n_layers' in meta else None
    return make_inventory(tensors, n_layers=n_layers, meta=meta)


def tensor_layouts(inventory, scheme, mix_rules=None):
    """Resolved (TensorInfo, FormatLayout) pairs of an inventory."""
    scheme = get_scheme(scheme)
    return [(info, resolve_layout(scheme, info.role, layer=info.layer,
                                  n_layers=inventory.n_layers,
                                  mix_rules=mix_rules))
            for info in inventory.tensors]


def predict_model_bytes(inventory, scheme, mix_rules=None):
    if not inventory.tensors:
        raise ShapeError('empty tensor inventory')
    return sum(tensor_nbytes(info.shape, layout, name=info.name)
               for info, layout in tensor_layouts(inventory, scheme, mix_rules))


def predict_model_size(inventory, scheme, mix_rules=None):
    """Tensor data size of a model under a scheme in MiB.

    Container overhead (header, metadata, directory, alignment padding) is not
    included: against the reported F16 size of the reference model it amounts
    to less than 0.01 MiB. `gguf_io.predict_file_size` gives exact file sizes.
    """
    return predict_model_bytes(inventory, scheme, mix_rules) / MIB


def bits_per_weight(scheme, inventory, mix_rules=None):
    """Storage bits per weight averaged over an inventory (element weighted)."""
    if not inventory.tensors:
        raise ShapeError('empty tensor inventory')
    total = sum(n_elements(info.shape) for info in inventory.tensors)
    return 8. * predict_model_bytes(inventory, scheme, mix_rules) / total


def size_reduction(quantized_size, f16_size):
    """Size reduction in percent: 100 * (1 - S_q / S_F16)."""
    if f16_size <= 0:
        raise InputError('F16 size has to be positive, got {}'.format(f16_size))
    if quantized_size <= 0:
        raise InputError('quantized size has to be positive, got {}'.format(
            quantized_size))
    return 100. * (1. - quantized_size / f16_size)


def scheme_summary(inventory, mix_rules=None):
    """Size, reduction and bpw of every registered scheme on an inventory."""
    f16_size = predict_model_size(inventory, 'F16', mix_rules)
    summary = []
    for scheme in SCHEMES.values():
        size = predict_model_size(inventory, scheme, mix_rules)
        summary.append(collections.OrderedDict([
            ('scheme', scheme.id),
            ('family', scheme.family),
            ('size_mib', size),
            ('reduction', size_reduction(size, f16_size)),
            ('bpw', bits_per_weight(scheme, inventory, mix_rules)),
        ]))
    return summary


TensorF32 = collections.namedtuple('TensorF32', ['name', 'shape', 'data'])

QuantizedTensor = collections.namedtuple('QuantizedTensor', [
    'name', 'scheme_id', 'shape', 'layout', 'payload'])


def make_tensor(name, data, shape=None):
    """TensorF32 from array-like data (row-major, last dimension contiguous)."""
    data = np.ascontiguousarray(data, dtype=np.float32)
    if shape is None:
        shape = data.shape
    shape = tuple(int(dim) for dim in shape)
    if data.size != n_elements(shape):
        raise ShapeError("tensor '{}': {} values do not fill shape {}".format(
            name, data.size, shape))
    return TensorF32(name, shape, data.reshape(shape))


def nominal_bits_per_weight(layout):
    """Storage bits per weight of one format, block metadata included."""
    return get_format(layout).bpw
