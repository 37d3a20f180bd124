# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: config_file.py

import ast
import configparser
import collections
import os

from .exceptions import ConfigError, SchemeError
from .schemes import FORMATS, QUANTIZABLE_ROLES, SCHEMES, parse_selector
from .utils.output import save_file


def append_keywords(config_file, dct, all_keywords=False, description=True):
    for key in dct.keys():
        if all_keywords or dct[key]['simple']:
            if description:
                config_file.append(
                    '\n\n# {}'.format(dct[key]['description']))
            config_file.append('\n{} = {}'.format(key, dct[key]['default']))
    return config_file


def make(all_keywords=False, description=True, output_directory='',
         filename='ggufquant.ini'):
    """Create a ggufquant configuration file.

    Parameters
    ----------
    all_keywords : bool
        Default is `False`, which includes only the most essential parameters. If set to `True`, include all parameters in the configuration file.
    description : bool
        Default is `True`, which includes descriptions of the parameters in the configuration file.
    output_directory : string
        Directory to which configuration file gets saved.
    filename : string
        Name of the configuration file.

    Returns
    -------
    path : str
        Filepath of the written configuration file.

    """
    default = [
        ('log_output', {
            'default': 'False',
            'description': "log messages printed to the terminal in a 'gq_log' directory next to the output [True/False]",
            'simple': False}),
        ('verbose', {
            'default': 'True',
            'description': "print diagnostic messages to the error stream [True/False]",
            'simple': False}),
        ('use_ncpus', {
            'default': 'None',
            'description': "number of worker threads. By default the value of the GGUFQUANT_NUM_THREADS environment variable or 1 is used. [int]",
            'simple': True}),
        ('mix_rules', {
            'default': 'None',
            'description': "filepath to a mix-rule file replacing the shipped per-tensor format rules [str]",
            'simple': False}),
    ]
    dct_default = collections.OrderedDict(default)

    quantize = [
        ('overwrite', {
            'default': 'True',
            'description': "overwrite an existing output file [True/False]",
            'simple': False}),
        ('progress', {
            'default': 'True',
            'description': "show a progress bar while tensors are converted [True/False]",
            'simple': False}),
    ]
    dct_quantize = collections.OrderedDict(quantize)

    bench = [
        ('n_prompt', {
            'default': '512',
            'description': "number of tokens streamed through the stack in prefill mode [int]",
            'simple': True}),
        ('n_gen', {
            'default': '128',
            'description': "number of sequential single-token passes in decode mode [int]",
            'simple': True}),
        ('repeats', {
            'default': '5',
            'description': "timed repetitions per mode, at least 5 [int]",
            'simple': True}),
        ('warmup', {
            'default': '1',
            'description': "untimed warm-up repetitions per mode [int]",
            'simple': False}),
        ('n_layers', {
            'default': '4',
            'description': "depth of the synthetic layer stack [int]",
            'simple': True}),
        ('hidden', {
            'default': '1024',
            'description': "hidden width of the synthetic layer stack, a multiple of 256 [int]",
            'simple': True}),
        ('ffn', {
            'default': '2816',
            'description': "feed-forward width of the synthetic layer stack, a multiple of 256 [int]",
            'simple': False}),
        ('kv', {
            'default': '256',
            'description': "key/value projection width of the synthetic layer stack [int]",
            'simple': False}),
        ('vocab', {
            'default': '512',
            'description': "vocabulary size of the synthetic embedding and output head [int]",
            'simple': False}),
        ('random_seed', {
            'default': '111',
            'description': "seed for the synthetic weights and token streams [int]",
            'simple': False}),
    ]
    dct_bench = collections.OrderedDict(bench)

    analyze = [
        ('baseline', {
            'default': "'F16'",
            'description': "scheme id of the unquantized reference row [str]",
            'simple': True}),
        ('objective', {
            'default': 'None',
            'description': "ranking objective of recommendations: 'size', 'avg', 'ppl', 'tg', 'pp' or a benchmark column [str]",
            'simple': False}),
        ('max_size_mib', {
            'default': 'None',
            'description': "hard upper limit on the model size in MiB [float]",
            'simple': False}),
        ('min_avg', {
            'default': 'None',
            'description': "hard lower limit on the five-benchmark average in percent [float]",
            'simple': False}),
        ('max_ppl', {
            'default': 'None',
            'description': "hard upper limit on the perplexity [float]",
            'simple': False}),
        ('min_reduction', {
            'default': 'None',
            'description': "hard lower limit on the size reduction in percent [float]",
            'simple': False}),
    ]
    dct_analyze = collections.OrderedDict(analyze)

    report = [
        ('basename', {
            'default': "'report'",
            'description': "basename of the text table and the SVG figure [str]",
            'simple': True}),
    ]
    dct_report = collections.OrderedDict(report)

    config_file = []

    config_file.append('#  Configuration file for ggufquant\n\n[DEFAULT]')
    config_file = append_keywords(config_file, dct_default,
                                  all_keywords=all_keywords,
                                  description=description)

    for section, dct in [('quantize', dct_quantize), ('bench', dct_bench),
                         ('analyze', dct_analyze), ('report', dct_report)]:
        config_file.append('\n\n[{}]'.format(section))
        config_file = append_keywords(config_file, dct,
                                      all_keywords=all_keywords,
                                      description=description)

    if not output_directory:
        output_directory = os.getcwd()

    path = os.path.join(output_directory, filename)
    with open(path, 'w') as file:
        for line in config_file:
            file.write(line)
        file.write('\n')
        save_file(filename, output_directory)
    return path


def get_values_from_config_file(self, config_file, config_key='DEFAULT'):
    """Read in values from a ggufquant configuration file.

    Parameters
    ----------
    config_file : str
        Filepath to configuration file of ggufquant.
    config_key : str
        Section of the configuration file, whose parameters should be read in addition to 'DEFAULT'.

    """
    config = configparser.ConfigParser()
    if not config.read(config_file):
        raise ConfigError("could not read config file '{}'".format(config_file))

    if config.has_section(config_key):
        items = config[config_key].items()
    else:
        items = config.defaults().items()

    for key, value in items:
        try:
            setattr(self, key, ast.literal_eval(value))
        except (ValueError, SyntaxError):
            raise ConfigError('Could not parse parameter {} from config file'.format(key))


def read_mix_rules(path):
    """Read a mix-rule file.

    Returns
    -------
    rules : dict
        {scheme_id: {role: [(selector, format_name), ...]}}

    """
    config = configparser.ConfigParser()
    if not config.read(path):
        raise ConfigError("could not read mix-rule file '{}'".format(path))

    rules = collections.OrderedDict()
    for section in config.sections():
        if section not in SCHEMES:
            raise ConfigError("mix-rule file '{}': unknown scheme section [{}]".format(
                path, section))
        rules[section] = collections.OrderedDict()
        for role, value in config.items(section, raw=True):
            if role not in QUANTIZABLE_ROLES:
                raise ConfigError(
                    "mix-rule file '{}' [{}]: '{}' is not a quantizable tensor role".format(
                        path, section, role))
            entries = []
            for item in value.split(','):
                selector, sep, format_name = item.strip().rpartition(':')
                try:
                    if not sep:
                        raise SchemeError("missing ':' in '{}'".format(item.strip()))
                    parse_selector(selector)
                except SchemeError as error:
                    raise ConfigError("mix-rule file '{}' [{}] {}: {}".format(
                        path, section, role, error))
                if format_name not in FORMATS or FORMATS[format_name].is_float:
                    raise ConfigError(
                        "mix-rule file '{}' [{}] {}: unknown block format '{}'".format(
                            path, section, role, format_name))
                entries.append((selector.strip(), format_name))
            rules[section][role] = entries
    return rules


def write_mix_rules(rules, path):
    lines = ['#  Per-tensor format rules of the quantization schemes.\n']
    for scheme_id, roles in rules.items():
        lines.append('\n[{}]\n'.format(scheme_id))
        for role, entries in roles.items():
            lines.append('{} = {}\n'.format(role, ', '.join(
                '{}:{}'.format(selector, format_name)
                for selector, format_name in entries)))
    with open(path, 'w') as file:
        file.writelines(lines)
