# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: bench.py

import collections
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from scipy.special import logsumexp
from tqdm import tqdm

from .analysis import windowed_perplexity
from .config_file import get_values_from_config_file, read_mix_rules
from .exceptions import BenchError, ShapeError
from .gguf_io import read_gguf
from .kernels import matmul_quantized, matvec_quantized, prepare_weights, select_rows
from .parallel_processing import default_num_threads
from .quantize import convert
from .schemes import classify_tensor, get_scheme
from .utils.output import format_warning, say, set_up_logger
from .utils.synthetic import make_synthetic_model, make_token_stream

warnings.showwarning = format_warning

MIN_REPEATS = 5
MODES = ('prefill', 'decode')
LAYER_ROLES = ('attn_norm', 'attn_q', 'attn_k', 'attn_v', 'attn_output',
               'ffn_norm', 'ffn_gate', 'ffn_up', 'ffn_down')
MATRIX_ROLES = ('attn_q', 'attn_k', 'attn_v', 'attn_output', 'ffn_gate', 'ffn_up',
                'ffn_down')


class BenchResult(collections.namedtuple('BenchResult', [
        'scheme_id', 'mode', 'test', 'n_tokens', 'tokens_per_second', 'std',
        'repeats', 'samples', 'n_threads', 'dims', 'aborted', 'error'])):
    """Throughput of one scheme in one mode.

    `tokens_per_second` and `std` are the mean and sample standard deviation
    over the completed repeats; `aborted` runs report what finished.
    """
    __slots__ = ()

    def to_dict(self):
        record = collections.OrderedDict(zip(self._fields, self))
        record['samples'] = list(self.samples)
        record['dims'] = collections.OrderedDict(self.dims)
        return record


def rms_norm(values, weight, eps):
    values = np.asarray(values, dtype=np.float32)
    scale = 1. / np.sqrt(np.mean(values * values, axis=-1, keepdims=True) + eps)
    return (values * scale.astype(np.float32)) * weight


def silu(values):
    with np.errstate(over='ignore'):
        return values / (1. + np.exp(-values))


class LayerStack(object):
    """Transformer-shaped stack of packed weight matrices.

    Every layer applies attention projections and a gated feed-forward block
    with RMS norms and residual connections. Each position attends only to
    itself, so the attention output is the value projection repeated over
    the query-head groups and positions of a batch are independent.

    Parameters
    ----------
    model : GGUFModel
        Llama-named tensors (`blk.<i>.<role>.weight`, optional `token_embd`,
        `output_norm` and `output`).
    n_threads : int
        Workers per matrix product.
    executor : concurrent.futures.ThreadPoolExecutor
        Shared pool for all products.

    """

    def __init__(self, model, n_threads=1, executor=None):
        self.n_threads = n_threads
        self.executor = executor
        self.eps = float(model.get('{}.attention.layer_norm_rms_epsilon'.format(
            model.get('general.architecture', 'llama')), 1e-5))

        self.layers = collections.defaultdict(dict)
        self.globals = {}
        for entry in model.tensors:
            role, layer = classify_tensor(entry.name)
            if layer is None:
                key = 'output_norm' if role == 'norm' else role
                self.globals[key] = entry
            else:
                self.layers[layer][entry.name.split('.')[2]] = entry
        self.layers = [self.layers[index] for index in sorted(self.layers)]
        if not self.layers:
            raise ShapeError('model has no transformer layers')
        for index, layer in enumerate(self.layers):
            missing = [role for role in LAYER_ROLES if role not in layer]
            if missing:
                raise ShapeError('layer {} lacks {}'.format(index, ', '.join(missing)))

        self.norms = [
            {role: model.tensor_values(layer[role].name) for role in ('attn_norm', 'ffn_norm')}
            for layer in self.layers]
        self.output_norm = None
        if 'output_norm' in self.globals:
            self.output_norm = model.tensor_values(self.globals['output_norm'].name)
        self.hidden = self.layers[0]['attn_q'].shape[1]
        self.kv = self.layers[0]['attn_v'].shape[0]
        self.ffn = self.layers[0]['ffn_up'].shape[0]
        if self.hidden % self.kv:
            raise ShapeError('hidden width {} is not a multiple of the kv width {}'.format(
                self.hidden, self.kv))

        # matrices are unpacked once per stack
        for layer in self.layers:
            for role in MATRIX_ROLES:
                layer[role] = prepare_weights(layer[role])
        if 'output' in self.globals:
            self.globals['output'] = prepare_weights(self.globals['output'])

    @property
    def dims(self):
        vocab = self.globals['output'].shape[0] if 'output' in self.globals else 0
        return collections.OrderedDict([
            ('n_layers', len(self.layers)), ('hidden', self.hidden), ('ffn', self.ffn),
            ('kv', self.kv), ('vocab', vocab)])

    @property
    def has_head(self):
        return 'token_embd' in self.globals and 'output' in self.globals

    def _linear(self, entry, values):
        if values.ndim == 1:
            return matvec_quantized(entry, values, n_threads=self.n_threads,
                                    executor=self.executor)
        return matmul_quantized(entry, values, n_threads=self.n_threads,
                                executor=self.executor)

    def _layer(self, index, hidden):
        layer, norms = self.layers[index], self.norms[index]
        attn_in = rms_norm(hidden, norms['attn_norm'], self.eps)
        self._linear(layer['attn_q'], attn_in)
        self._linear(layer['attn_k'], attn_in)
        values = self._linear(layer['attn_v'], attn_in)
        reps = self.hidden // self.kv
        attended = np.tile(values, reps) if values.ndim == 1 else np.tile(values, (1, reps))
        hidden = hidden + self._linear(layer['attn_output'], attended)

        ffn_in = rms_norm(hidden, norms['ffn_norm'], self.eps)
        gate = self._linear(layer['ffn_gate'], ffn_in)
        up = self._linear(layer['ffn_up'], ffn_in)
        return hidden + self._linear(layer['ffn_down'], silu(gate) * up)

    def forward(self, hidden):
        """Hidden state(s) through all layers; a row (hidden,) or a batch (n, hidden)."""
        hidden = np.asarray(hidden, dtype=np.float32)
        for index in range(len(self.layers)):
            hidden = self._layer(index, hidden)
        return hidden

    def embed(self, tokens):
        return select_rows(self.globals['token_embd'], tokens)

    def logits(self, hidden):
        if self.output_norm is not None:
            hidden = rms_norm(hidden, self.output_norm, self.eps)
        return self._linear(self.globals['output'], hidden)

    def token_logprobs(self, tokens):
        """log p(tokens[i + 1] | tokens[i]) for i = 0 .. n - 2."""
        tokens = np.asarray(tokens, dtype=np.int64)
        if not self.has_head:
            raise ShapeError('model has no embedding and output head')
        logits = self.logits(self.forward(self.embed(tokens[:-1]))).astype(np.float64)
        logprobs = logits - logsumexp(logits, axis=1, keepdims=True)
        return logprobs[np.arange(tokens.size - 1), tokens[1:]]


def _prefill(stack, n_tokens, rng):
    if stack.has_head:
        tokens = rng.integers(0, stack.dims['vocab'], size=n_tokens)
        stack.logits(stack.forward(stack.embed(tokens))[-1])
    else:
        stack.forward(rng.standard_normal((n_tokens, stack.hidden)).astype(np.float32))


def _decode(stack, n_tokens, rng):
    if stack.has_head:
        token = int(rng.integers(0, stack.dims['vocab']))
        for _ in range(n_tokens):
            hidden = stack.forward(stack.embed([token])[0])
            token = int(np.argmax(stack.logits(hidden)))
    else:
        hidden = rng.standard_normal(stack.hidden).astype(np.float32)
        for _ in range(n_tokens):
            hidden = rms_norm(stack.forward(hidden), 1., stack.eps)


def bench_throughput(stack, mode, n_prompt=512, n_gen=128, repeats=MIN_REPEATS,
                     warmup=1, scheme_id=None, clock=time.perf_counter, seed=111,
                     progress=False):
    """Tokens per second of a layer stack in prefill or decode mode.

    Prefill pushes one batch of `n_prompt` positions through the stack per
    repeat; decode runs `n_gen` sequential single-position passes, each
    feeding its greedy token (or normalized state) to the next.

    Raises
    ------
    BenchError
        Fewer than 5 repeats or an unknown mode.

    """
    if mode not in MODES:
        raise BenchError("unknown mode '{}'; valid modes: {}".format(mode, ', '.join(MODES)))
    if repeats < MIN_REPEATS:
        raise BenchError('at least {} repeats are required, got {}'.format(
            MIN_REPEATS, repeats))
    n_tokens = n_prompt if mode == 'prefill' else n_gen
    if n_tokens < 1:
        raise BenchError('number of tokens has to be positive, got {}'.format(n_tokens))
    run = _prefill if mode == 'prefill' else _decode
    test = '{}{}'.format('pp' if mode == 'prefill' else 'tg', n_tokens)

    rng = np.random.default_rng(seed)
    samples, error = [], None
    try:
        for _ in range(warmup):
            run(stack, n_tokens, rng)
        for _ in tqdm(range(repeats), desc=test, disable=not progress):
            start = clock()
            run(stack, n_tokens, rng)
            samples.append(n_tokens / (clock() - start))
    except MemoryError as memory_error:
        error = 'out of memory after {} of {} repeats: {}'.format(
            len(samples), repeats, memory_error)
        warnings.warn(error)

    mean = float(np.mean(samples)) if samples else None
    std = float(np.std(samples, ddof=1)) if len(samples) > 1 else None
    return BenchResult(scheme_id, mode, test, n_tokens, mean, std, len(samples),
                       samples, stack.n_threads, stack.dims, error is not None, error)


class ThroughputBench(object):
    """pp/tg throughput of a scheme on a synthetic or user-supplied model."""

    def __init__(self, scheme='F16', path_to_file=None, config_file=''):
        self.scheme = scheme
        self.path_to_file = path_to_file

        self.n_prompt = 512
        self.n_gen = 128
        self.repeats = MIN_REPEATS
        self.warmup = 1
        self.n_layers = 4
        self.hidden = 1024
        self.ffn = 2816
        self.kv = 256
        self.vocab = 512
        self.random_seed = 111
        self.modes = MODES

        self.mix_rules = None
        self.use_ncpus = None
        self.log_output = False
        self.verbose = True
        self.clock = time.perf_counter

        if config_file:
            get_values_from_config_file(
                self, config_file, config_key='bench')

    def check_settings(self):
        get_scheme(self.scheme)
        if self.repeats < MIN_REPEATS:
            raise BenchError('at least {} repeats are required, got {}'.format(
                MIN_REPEATS, self.repeats))
        for mode in self.modes:
            if mode not in MODES:
                raise BenchError("unknown mode '{}'".format(mode))

    def initialize(self):
        self.logger = False
        if self.log_output:
            dirname = os.path.dirname(os.path.abspath(self.path_to_file or 'bench'))
            self.logger = set_up_logger(dirname, self.path_to_file or 'synthetic',
                                        method='gq_bench')
        self.n_threads = self.use_ncpus or default_num_threads()

        if self.path_to_file is not None:
            model = read_gguf(self.path_to_file)
        else:
            model = make_synthetic_model(
                n_layers=self.n_layers, hidden=self.hidden, ffn=self.ffn, kv=self.kv,
                vocab=self.vocab, seed=self.random_seed)
        if all(entry.layout.is_float for entry in model.tensors):
            rules = read_mix_rules(self.mix_rules) if self.mix_rules else None
            model, _ = convert(model, self.scheme, mix_rules=rules,
                               n_jobs=self.n_threads)
        self.model = model

    def getting_ready(self):
        string = 'ggufquant throughput of {}'.format(self.scheme)
        banner = len(string) * '='
        heading = '\n' + banner + '\n' + string + '\n' + banner
        say(heading, logger=self.logger, verbose=self.verbose)

    def bench(self):
        """Run every mode and return one `BenchResult` per mode."""
        self.check_settings()
        self.initialize()
        self.getting_ready()

        results = []
        with ThreadPoolExecutor(max_workers=self.n_threads) as executor:
            stack = LayerStack(self.model, n_threads=self.n_threads, executor=executor)
            for mode in self.modes:
                result = bench_throughput(
                    stack, mode, n_prompt=self.n_prompt, n_gen=self.n_gen,
                    repeats=self.repeats, warmup=self.warmup,
                    scheme_id=get_scheme(self.scheme).id, clock=self.clock,
                    seed=self.random_seed, progress=self.verbose)
                if result.aborted:
                    say('{} aborted: {}'.format(result.test, result.error),
                        logger=self.logger, verbose=self.verbose)
                else:
                    say('{}: {:.2f} +/- {:.2f} tokens/s'.format(
                        result.test, result.tokens_per_second, result.std),
                        logger=self.logger, verbose=self.verbose)
                results.append(result)
        return results


def tiny_model_perplexity(model, n_tokens=2048, n_ctx=512, seed=111, n_threads=1):
    """Perplexity of a model on a synthetic token stream through the packed kernels."""
    with ThreadPoolExecutor(max_workers=n_threads) as executor:
        stack = LayerStack(model, n_threads=n_threads, executor=executor)
        tokens = make_token_stream(n_tokens, stack.dims['vocab'], seed=seed)
        return windowed_perplexity(stack.token_logprobs, tokens, n_ctx=n_ctx)
