# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: test_cli.py

import json
import os

from ..cli import EXIT_INPUT, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, main
from ..gguf_io import read_gguf

FRONTIER_LINE = 'Pareto frontier: Q5_0, Q4_K_S, Q3_K_L, Q3_K_M, Q3_K_S'


def test_quantize_reports_size_and_reduction(tmp_path, tiny_gguf, capsys):
    output = str(tmp_path / 'tiny-q4_k_s.gguf')
    assert main(['quantize', tiny_gguf, output, 'Q4_K_S', '--quiet']) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith('Q4_K_S: size ')
    assert 'reduction' in out
    assert read_gguf(output).get('general.file_type') == 14


def test_quantize_json_output(tmp_path, tiny_gguf, capsys):
    output = str(tmp_path / 'tiny-q8_0.gguf')
    assert main(['quantize', tiny_gguf, output, 'Q8_0', '--quiet', '--json',
                 '--threads', '2']) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary['scheme'] == 'Q8_0'
    assert summary['file_bytes'] == os.path.getsize(output)


def test_unknown_scheme_is_a_usage_error(tmp_path, tiny_gguf, capsys):
    assert main(['quantize', tiny_gguf, str(tmp_path / 'out.gguf'), 'Q9_X']) == EXIT_USAGE
    err = capsys.readouterr().err
    assert 'Q9_X' in err
    assert 'Q4_K_M' in err


def test_usage_errors_and_help(capsys):
    assert main([]) == EXIT_USAGE
    assert main(['--help']) == EXIT_OK
    assert main(['bench', '--threads', '0']) == EXIT_USAGE


def test_missing_input_is_an_input_error(tmp_path, capsys):
    missing = str(tmp_path / 'missing.gguf')
    assert main(['inspect', missing]) == EXIT_INPUT
    assert 'does not exist' in capsys.readouterr().err


def test_corrupt_input_is_an_input_error(tmp_path, capsys):
    path = tmp_path / 'broken.gguf'
    path.write_bytes(b'GGML' + bytes(60))
    assert main(['inspect', str(path)]) == EXIT_INPUT
    assert 'magic' in capsys.readouterr().err


def test_too_few_repeats_is_a_usage_error(capsys):
    assert main(['bench', '--repeats', '4', '--quiet']) == EXIT_USAGE
    assert 'at least 5' in capsys.readouterr().err


def test_too_few_repeats_from_a_config_file_is_an_internal_error(tmp_path, capsys):
    config = tmp_path / 'ggufquant.ini'
    config.write_text('[bench]\nrepeats = 3\n')
    assert main(['bench', '--config', str(config), '--quiet']) == EXIT_INTERNAL
    assert 'BenchError' in capsys.readouterr().err


def test_inspect_text_and_json(tiny_gguf, capsys):
    assert main(['inspect', tiny_gguf]) == EXIT_OK
    out = capsys.readouterr().out
    assert 'GGUF version 3' in out
    assert 'formats: F16 x16, F32 x5' in out

    assert main(['inspect', tiny_gguf, '--json', '--checksums']) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report['summary']['n_tensors'] == 21
    assert report['metadata']['general.architecture']['value'] == 'llama'
    assert all(len(tensor['sha256']) == 64 for tensor in report['tensors'])


def test_dequantize_round_trip(tmp_path, tiny_gguf, capsys):
    quantized = str(tmp_path / 'q4_0.gguf')
    decoded = str(tmp_path / 'f32.gguf')
    assert main(['quantize', tiny_gguf, quantized, 'Q4_0', '--quiet']) == EXIT_OK
    assert main(['dequantize', quantized, decoded, '--quiet']) == EXIT_OK
    model = read_gguf(decoded)
    assert {entry.layout.name for entry in model.tensors} == {'F32'}


def test_analyze_prints_the_frontier(capsys):
    assert main(['analyze']) == EXIT_OK
    out = capsys.readouterr().out
    assert FRONTIER_LINE in out
    assert 'dominated by Q5_0' in out


def test_analyze_scenario_and_constraints(capsys):
    assert main(['analyze', '--scenario', 'edge']) == EXIT_OK
    assert 'recommended (avg): Q3_K_M, Q3_K_S' in capsys.readouterr().out
    assert main(['analyze', '--scenario', 'calibration']) == EXIT_OK
    assert 'recommended (ppl): Q8_0, Q6_K, Q5_K_M, ' in capsys.readouterr().out
    assert main(['analyze', '--max-size-mib', '1000']) == EXIT_OK
    assert 'no scheme satisfies all constraints' in capsys.readouterr().out


def test_flags_override_the_config_file(tmp_path, capsys):
    config = tmp_path / 'ggufquant.ini'
    config.write_text('[analyze]\nmax_size_mib = 4000\n')
    assert main(['analyze', '--config', str(config)]) == EXIT_OK
    assert 'recommended (avg): Q3_K_M, Q3_K_S' in capsys.readouterr().out
    assert main(['analyze', '--config', str(config), '--max-size-mib', '3600']) == EXIT_OK
    assert 'recommended (avg): Q3_K_S\n' in capsys.readouterr().out


def test_analyze_json(capsys):
    assert main(['analyze', '--json', '--objective', 'ppl']) == EXIT_OK
    output = json.loads(capsys.readouterr().out)
    assert output['baseline'] == 'F16'
    assert output['frontier'] == ['Q5_0', 'Q4_K_S', 'Q3_K_L', 'Q3_K_M', 'Q3_K_S']
    assert output['recommendation']['ranking'][0] == 'Q8_0'
    assert len(output['points']) == 14


def test_analyze_rejects_a_broken_results_file(tmp_path, capsys):
    path = tmp_path / 'results.csv'
    path.write_text('scheme,gsm8k\nF16,abc\n')
    assert main(['analyze', '--results', str(path), '--strict']) == EXIT_INPUT


def test_report_writes_text_and_figure(tmp_path, capsys):
    assert main(['report', '--output-dir', str(tmp_path), '--basename', 'llama',
                 '--quiet']) == EXIT_OK
    paths = capsys.readouterr().out.split()
    assert paths == [str(tmp_path / 'llama.txt'), str(tmp_path / 'llama.svg')]
    assert all(os.path.exists(path) for path in paths)


def test_sizes_of_the_shipped_inventory(capsys):
    assert main(['sizes']) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    q4_0 = next(line for line in lines if line.startswith('Q4_0 '))
    assert '4437.80' in q4_0
    assert '71.03' in q4_0


def test_layout_doc(capsys):
    assert main(['layout-doc']) == EXIT_OK
    assert 'Q4_K (type 12): 256 weights in 144 bytes' in capsys.readouterr().out
    assert main(['layout-doc', '--json']) == EXIT_OK
    assert len(json.loads(capsys.readouterr().out)) == 11


def test_perplexity_of_the_tiny_model(tiny_gguf, capsys):
    assert main(['perplexity', tiny_gguf, '--tokens', '256', '--ctx', '64',
                 '--scheme', 'Q8_0', '--json']) == EXIT_OK
    output = json.loads(capsys.readouterr().out)
    assert output['perplexity'] > 1.
    assert output['scheme'] == 'Q8_0'


def test_init_config(tmp_path, capsys):
    assert main(['init-config', '--output-dir', str(tmp_path), '--all']) == EXIT_OK
    path = capsys.readouterr().out.strip()
    assert path == str(tmp_path / 'ggufquant.ini')
    with open(path) as file:
        assert '[bench]' in file.read()
