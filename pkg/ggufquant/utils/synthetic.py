# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: synthetic.py
"""Synthetic llama-shaped models and token streams for tests and benchmarks."""

import numpy as np

from ..gguf_io import GGUFModel
from ..schemes import SCHEMES


def layer_shapes(layer, hidden, ffn, kv):
    """(name, row-major shape) of the tensors of one transformer layer."""
    prefix = 'blk.{}.'.format(layer)
    return [
        (prefix + 'attn_norm.weight', (hidden,)),
        (prefix + 'attn_q.weight', (hidden, hidden)),
        (prefix + 'attn_k.weight', (kv, hidden)),
        (prefix + 'attn_v.weight', (kv, hidden)),
        (prefix + 'attn_output.weight', (hidden, hidden)),
        (prefix + 'ffn_norm.weight', (hidden,)),
        (prefix + 'ffn_gate.weight', (ffn, hidden)),
        (prefix + 'ffn_up.weight', (ffn, hidden)),
        (prefix + 'ffn_down.weight', (hidden, ffn)),
    ]


def model_shapes(n_layers, hidden, ffn, kv, vocab):
    shapes = [('token_embd.weight', (vocab, hidden))]
    for layer in range(n_layers):
        shapes.extend(layer_shapes(layer, hidden, ffn, kv))
    shapes.append(('output_norm.weight', (hidden,)))
    shapes.append(('output.weight', (vocab, hidden)))
    return shapes


def make_synthetic_model(n_layers=2, hidden=256, ffn=512, kv=128, vocab=512,
                         seed=111, dtype='F16'):
    """Random llama-shaped model stored at F16 (or F32).

    Matrices are drawn from N(0, 1/fan_in), norm weights scatter around 1.
    Widths used by K-quant schemes have to be multiples of 256.
    """
    rng = np.random.default_rng(seed)
    model = GGUFModel(metadata=[
        ('general.architecture', 'llama'),
        ('general.name', 'synthetic-{}x{}'.format(n_layers, hidden)),
        ('general.file_type', SCHEMES['F16'].file_type if dtype == 'F16' else 0),
        ('general.quantization_version', 2),
        ('llama.block_count', n_layers),
        ('llama.context_length', 2048),
        ('llama.embedding_length', hidden),
        ('llama.feed_forward_length', ffn),
        ('llama.vocab_size', vocab),
        ('llama.attention.layer_norm_rms_epsilon', 1e-5),
    ])
    for name, shape in model_shapes(n_layers, hidden, ffn, kv, vocab):
        if len(shape) == 1:
            values = 1. + 0.05 * rng.standard_normal(shape)
            model.add_array(name, values, 'F32')
        else:
            values = rng.standard_normal(shape) / np.sqrt(shape[-1])
            model.add_array(name, values, dtype)
    return model


def make_token_stream(n_tokens, vocab, seed=111):
    """Token ids with a skewed (Zipf-like) unigram distribution."""
    rng = np.random.default_rng(seed)
    weights = 1. / np.arange(1, vocab + 1)
    return rng.choice(vocab, size=n_tokens, p=weights / weights.sum())
