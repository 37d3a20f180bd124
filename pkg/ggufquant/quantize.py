# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: quantize.py

import collections
import os
import warnings

from tqdm import tqdm

from .block_codecs import dequantize_payload, quantize_array
from .config_file import get_values_from_config_file, read_mix_rules
from .exceptions import ConfigError, InputError, QuantizationError
from .gguf_io import GGUFModel, model_summary, read_gguf, write_gguf
from .parallel_processing import default_num_threads
from .schemes import (MIB, FORMATS, classify_tensor, get_scheme, resolve_layout,
                      size_reduction)
from .utils.output import format_warning, save_file, say, set_up_logger, timer

warnings.showwarning = format_warning

QUANTIZATION_VERSION = 2
FILE_TYPE_KEY = 'general.file_type'
QUANTIZATION_VERSION_KEY = 'general.quantization_version'
FLOAT_FILE_TYPES = {'F32': 0, 'F16': 1}


def _copy_metadata(model):
    return GGUFModel(metadata=collections.OrderedDict(model.metadata))


def _update_key(model, key, value):
    # only keys the input already carries are touched, so key sets are preserved
    if key in model.metadata:
        model.set(key, value, value_type=model.metadata[key].type)


def convert(model, scheme, n_layers=None, mix_rules=None, n_jobs=1, progress=False):
    """Re-encode the tensors of a float model under a quantization scheme.

    Parameters
    ----------
    model : GGUFModel
        Input model storing every tensor as F32 or F16.
    scheme : str or QuantScheme
        Target scheme id ('Q4_K_M', ...).
    n_layers : int
        Model depth for per-layer mix rules; read from the model when None.
    mix_rules : dict
        Replaces the shipped mix rules.
    n_jobs : int
        Worker threads used inside each tensor.
    progress : bool
        Show a progress bar over the tensors.

    Returns
    -------
    converted : GGUFModel
        Metadata copied (file type and quantization version updated when
        present), tensors in input order.
    seconds : float
        Wall-clock conversion time.

    """
    start = timer()
    scheme = get_scheme(scheme)
    if n_layers is None:
        n_layers = model.n_layers()

    converted = _copy_metadata(model)
    for entry in tqdm(model.tensors, desc=scheme.id, disable=not progress):
        if not entry.layout.is_float:
            raise QuantizationError(
                "tensor '{}' is already stored as {}; conversion needs F32/F16 "
                "input".format(entry.name, entry.layout.name))
        role, layer = classify_tensor(entry.name)
        layout = resolve_layout(scheme, role, layer=layer, n_layers=n_layers,
                                mix_rules=mix_rules)
        if layout == entry.layout:
            converted.add_tensor(entry.name, entry.payload, layout, entry.shape)
            continue
        values = dequantize_payload(entry.payload, entry.layout, entry.shape,
                                    name=entry.name)
        try:
            payload = quantize_array(values, layout, name=entry.name, n_jobs=n_jobs)
        except InputError as error:
            if entry.name in str(error):
                raise
            raise type(error)("tensor '{}' ({}): {}".format(entry.name, layout.name, error))
        converted.add_tensor(entry.name, payload, layout, entry.shape)

    _update_key(converted, FILE_TYPE_KEY, scheme.file_type)
    _update_key(converted, QUANTIZATION_VERSION_KEY, QUANTIZATION_VERSION)
    return converted, timer('stop', start)


def dequantize_model(model, dtype='F32'):
    """Decode every tensor of a model to F32 (or F16); norms stay F32."""
    if dtype not in FLOAT_FILE_TYPES:
        raise InputError("dequantization target has to be F32 or F16, got '{}'".format(dtype))
    decoded = _copy_metadata(model)
    for entry in model.tensors:
        role = classify_tensor(entry.name)[0]
        layout = FORMATS['F32'] if role in ('norm', 'rope') else FORMATS[dtype]
        if layout == entry.layout:
            decoded.add_tensor(entry.name, entry.payload, layout, entry.shape)
            continue
        values = dequantize_payload(entry.payload, entry.layout, entry.shape,
                                    name=entry.name)
        decoded.add_tensor(entry.name, quantize_array(values, layout, name=entry.name),
                           layout, entry.shape)
    _update_key(decoded, FILE_TYPE_KEY, FLOAT_FILE_TYPES[dtype])
    return decoded


class GGUFQuantize(object):
    """Convert a F16/F32 GGUF file to a quantization scheme."""

    def __init__(self, path_to_file=None, path_to_output=None, scheme=None,
                 config_file=''):
        self.path_to_file = path_to_file
        self.path_to_output = path_to_output
        self.scheme = scheme

        self.mix_rules = None
        self.n_layers = None
        self.use_ncpus = None
        self.log_output = False
        self.verbose = True
        self.overwrite = True
        self.progress = True

        if config_file:
            get_values_from_config_file(
                self, config_file, config_key='quantize')

    def check_settings(self):
        for name in ('path_to_file', 'path_to_output', 'scheme'):
            if getattr(self, name) is None:
                raise ConfigError("Need to specify '{}'.".format(name))
        get_scheme(self.scheme)
        if not self.overwrite and os.path.exists(self.path_to_output):
            raise InputError("output file '{}' exists and 'overwrite' is False".format(
                self.path_to_output))

    def initialize(self):
        self.logger = False
        if self.log_output:
            self.logger = set_up_logger(
                os.path.dirname(os.path.abspath(self.path_to_output)),
                self.path_to_output, method='gq_quantize')

        self.n_jobs = self.use_ncpus or default_num_threads()
        self.rules = None
        if self.mix_rules is not None:
            self.rules = read_mix_rules(self.mix_rules)

    def getting_ready(self):
        string = 'ggufquant conversion to {}'.format(self.scheme)
        banner = len(string) * '='
        heading = '\n' + banner + '\n' + string + '\n' + banner
        say(heading, logger=self.logger, verbose=self.verbose)

    def quantize(self):
        """Run the conversion and write the output file.

        Returns
        -------
        summary : collections.OrderedDict
            scheme, paths, input/output tensor data size in MiB, size reduction
            in percent, file size in bytes, seconds and tensor counts per format.

        """
        self.check_settings()
        self.initialize()
        self.getting_ready()

        say("reading '{}'".format(self.path_to_file), logger=self.logger,
            verbose=self.verbose)
        model = read_gguf(self.path_to_file)
        converted, seconds = convert(
            model, self.scheme, n_layers=self.n_layers, mix_rules=self.rules,
            n_jobs=self.n_jobs, progress=self.progress and self.verbose)
        n_bytes = write_gguf(converted, self.path_to_output)
        save_file(os.path.basename(self.path_to_output),
                  os.path.dirname(os.path.abspath(self.path_to_output)),
                  verbose=self.verbose)

        input_mib = model.data_nbytes / MIB
        output_mib = converted.data_nbytes / MIB
        summary = collections.OrderedDict([
            ('scheme', get_scheme(self.scheme).id),
            ('input', self.path_to_file),
            ('output', self.path_to_output),
            ('input_mib', input_mib),
            ('size_mib', output_mib),
            ('reduction', size_reduction(output_mib, input_mib)),
            ('file_bytes', n_bytes),
            ('seconds', seconds),
            ('formats', model_summary(converted)['formats']),
        ])
        say('size {:.2f} MiB ({:.2f}% reduction) in {:.2f} s'.format(
            output_mib, summary['reduction'], seconds),
            logger=self.logger, verbose=self.verbose)
        return summary
