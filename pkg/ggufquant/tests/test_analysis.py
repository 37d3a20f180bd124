# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: test_analysis.py

import itertools
import json
import math

import numpy as np
import pytest

from ..analysis import (SCENARIOS, avg_loss, avg_score, dominators, ifeval_aggregate,
                        load_results, make_row, parse_row, pareto_frontier, pareto_points,
                        perplexity, quant_time_ordering, recommend, recommend_scenario,
                        results_table, row_reduction, windowed_perplexity)
from ..exceptions import InputError, ResultsError
from ..utils.output import format_value

FRONTIER = ['Q5_0', 'Q4_K_S', 'Q3_K_L', 'Q3_K_M', 'Q3_K_S']
HEADER = 'scheme,gsm8k,hellaswag,ifeval,mmlu,truthfulqa_mc2,avg,ppl,size_mib\n'
F16_LINE = 'F16,77.63,72.51,78.93,63.50,54.79,69.47,7.32,15317.02\n'
Q6_K_LINE = 'Q6_K,78.17,72.48,77.63,63.17,54.71,69.23,7.35,6282.97\n'


def _dominates(a, b):
    return a[0] >= b[0] and a[1] <= b[1] and (a[0] > b[0] or a[1] < b[1])


# ---- metrics -----------------------------------------------------------------

def test_perplexity_of_a_uniform_model():
    assert perplexity(np.full(1000, -math.log(256.))) == pytest.approx(256., rel=1e-12)


def test_perplexity_ignores_the_order(rng):
    logprobs = -rng.exponential(2., size=4096)
    assert perplexity(logprobs) == perplexity(rng.permutation(logprobs))


@pytest.mark.parametrize('logprobs', [[], [-1., np.nan], [-1., 0.5], [-np.inf]])
def test_perplexity_rejects_invalid_streams(logprobs):
    with pytest.raises(InputError):
        perplexity(logprobs)


def test_windowed_perplexity_scores_the_second_half():
    calls = []

    def logprob_fn(window):
        calls.append(len(window))
        logprobs = np.full(len(window) - 1, -math.log(2.))
        logprobs[:3] = -10.
        return logprobs

    assert windowed_perplexity(logprob_fn, np.arange(20), n_ctx=8) == pytest.approx(2.)
    assert calls == [8, 8]


def test_windowed_perplexity_errors():
    with pytest.raises(InputError):
        windowed_perplexity(lambda window: np.zeros(0), np.arange(10), n_ctx=1)
    with pytest.raises(InputError):
        windowed_perplexity(lambda window: np.zeros(7), np.arange(5), n_ctx=8)
    with pytest.raises(InputError):
        windowed_perplexity(lambda window: np.zeros(3), np.arange(16), n_ctx=8)


def test_ifeval_aggregate():
    assert ifeval_aggregate([70., 80., 75., 85.]) == 77.5
    with pytest.raises(InputError):
        ifeval_aggregate([70., 80., 75.])
    with pytest.raises(InputError):
        ifeval_aggregate([70., 80., 75., 101.])


def test_recomputed_averages_match_the_shipped_table(shipped_rows):
    assert len(shipped_rows) == 14
    for row in shipped_rows:
        assert format_value(avg_score(row)) == format_value(row.avg), row.scheme


def test_average_needs_every_benchmark():
    with pytest.raises(ResultsError):
        avg_score(make_row('Q4_0', gsm8k=70., hellaswag=70.))
    with pytest.raises(InputError):
        avg_loss(60., 0.)


# ---- Pareto ------------------------------------------------------------------

def test_frontier_of_the_shipped_results(shipped_rows):
    points = pareto_points(shipped_rows)
    frontier = sorted((point for point in points if point.on_frontier),
                      key=lambda point: point.reduction)
    assert [point.scheme_id for point in frontier] == FRONTIER


def test_dominated_schemes_name_the_strongest_dominator(shipped_rows):
    points = {point.scheme_id: point for point in pareto_points(shipped_rows)}
    for scheme in ('F16', 'Q8_0', 'Q5_1', 'Q5_K_S', 'Q5_K_M'):
        assert points[scheme].dominated_by == 'Q5_0'
    assert points['F16'].reduction == 0.
    assert points['F16'].avg_loss == 0.
    for scheme in FRONTIER:
        assert points[scheme].dominated_by is None


@pytest.mark.parametrize('scheme,loss', [
    ('Q5_0', -0.645), ('Q4_K_S', 0.438), ('Q3_K_L', 0.996), ('Q3_K_M', 2.024),
    ('Q3_K_S', 5.729)])
def test_average_losses(shipped_rows, scheme, loss):
    points = {point.scheme_id: point for point in pareto_points(shipped_rows)}
    assert points[scheme].avg_loss == pytest.approx(loss, abs=0.01)


def test_frontier_matches_a_brute_force_search(rng):
    for _ in range(1000):
        n_points = int(rng.integers(1, 13))
        # small integer grid, so ties in both coordinates occur
        points = rng.integers(0, 6, size=(n_points, 2)).astype(float)
        expected = [index for index, point in enumerate(points)
                    if not any(_dominates(other, point) for other in points)]
        assert pareto_frontier(points) == expected
        assert [index for index, dominator in enumerate(dominators(points))
                if dominator is None] == expected


def test_identical_points_stay_on_the_frontier():
    assert pareto_frontier([(50., 1.), (50., 1.), (40., 2.)]) == [0, 1]
    assert pareto_frontier([]) == []


def test_missing_baseline_is_reported(shipped_rows):
    with pytest.raises(ResultsError):
        pareto_points(shipped_rows, baseline='BF16')


def test_reduction_falls_back_to_the_given_column():
    base = make_row('F16', size_mib=100.)
    row = make_row('Q4_0', reduction=70.)
    assert row_reduction(row, base) == 70.
    assert row_reduction(make_row('Q8_0', size_mib=50.), base) == 50.
    with pytest.raises(ResultsError):
        row_reduction(make_row('Q5_0'), base)


# ---- recommendation ----------------------------------------------------------

@pytest.mark.parametrize('scenario,expected', [
    ('edge', ['Q3_K_M']),
    ('interactive', ['Q4_0', 'Q4_K_S', 'Q4_K_M']),
    ('throughput', ['Q3_K_L']),
    ('accuracy', ['Q8_0']),
    ('reasoning', ['Q5_0']),
    ('instruction', ['Q4_K_S']),
    ('calibration', ['Q8_0', 'Q6_K', 'Q5_K_M'])])
def test_scenario_recommendations(shipped_rows, scenario, expected):
    recommendation = recommend_scenario(shipped_rows, scenario)
    assert recommendation.ranking[:len(expected)] == expected
    assert 'F16' not in recommendation.ranking


def test_every_scenario_has_a_description():
    assert all(settings['description'] for settings in SCENARIOS.values())


def test_recommend_with_constraints_only(shipped_rows):
    recommendation = recommend(shipped_rows, min_reduction=70.)
    assert recommendation.objective == 'avg'
    assert recommendation.ranking[0] == 'Q4_K_S'
    assert set(recommendation.ranking) == {'Q3_K_S', 'Q3_K_M', 'Q3_K_L', 'Q4_0',
                                          'Q4_K_S'}


def test_empty_recommendation_explains_itself(shipped_rows):
    recommendation = recommend(shipped_rows, max_size_mib=1000.)
    assert recommendation.ranking == []
    assert recommendation.report[0] == 'no scheme satisfies all constraints'
    assert len(recommendation.rejected['max_size_mib']) == 13
    assert recommendation.report[1].startswith('max_size_mib = 1000.0 rejects Q3_K_S')


def test_recommend_errors(shipped_rows):
    with pytest.raises(InputError):
        recommend(shipped_rows)
    with pytest.raises(InputError):
        recommend(shipped_rows, objective='speed')
    with pytest.raises(InputError):
        recommend_scenario(shipped_rows, 'gaming')


def test_kquants_take_longer_to_produce(shipped_rows):
    ordering = quant_time_ordering(shipped_rows)
    assert ordering['kquant_slower']
    assert ordering['legacy'] == pytest.approx(28.408)
    with pytest.raises(ResultsError):
        quant_time_ordering([make_row('Q4_0', quant_time_s=20.)])


# ---- ingestion ---------------------------------------------------------------

def test_malformed_rows_are_rejected_one_by_one(tmp_path):
    path = tmp_path / 'results.csv'
    path.write_text(HEADER + F16_LINE
                    + 'Q4_0,abc,71.88,77.46,62.20,52.68,67.98,7.74,4437.80\n'
                    + 'Q8_0,77.48,72.52,78.79,63.43,54.81,69.41,0.5,8137.64\n'
                    + 'Q5_0,79.08\n'
                    + F16_LINE + Q6_K_LINE)
    with pytest.warns(UserWarning) as record:
        rows = load_results(str(path))
    assert [row.scheme for row in rows] == ['F16', 'Q6_K']
    assert len([item for item in record if 'rejected row' in str(item.message)]) == 4

    with pytest.raises(ResultsError) as error:
        load_results(str(path), strict=True)
    for number in (3, 4, 5, 6):
        assert '{}:{}'.format(path, number) in str(error.value)


def test_comments_are_skipped_and_unknown_columns_rejected(tmp_path):
    path = tmp_path / 'results.csv'
    path.write_text('# scores in percent\n' + HEADER + F16_LINE)
    rows = load_results(str(path))
    assert rows[0].source == '{}:3'.format(path)

    path.write_text('scheme,gsm8k,speed\nF16,77.63,3\n')
    with pytest.raises(ResultsError):
        load_results(str(path))
    with pytest.raises(ResultsError):
        load_results(str(tmp_path / 'missing.csv'))


def test_json_results_with_ifeval_parts(tmp_path):
    path = tmp_path / 'results.json'
    path.write_text(json.dumps({'rows': [
        {'scheme': 'F16', 'gsm8k': 77.63, 'hellaswag': 72.51, 'ifeval': 78.93,
         'mmlu': 63.5, 'truthfulqa_mc2': 54.79, 'size_mib': 15317.02},
        {'scheme': 'Q4_0', 'gsm8k': 75.66, 'hellaswag': 71.88, 'mmlu': 62.2,
         'truthfulqa_mc2': 52.68, 'size_mib': 4437.8, 'mmlu_stem': 55.,
         'ifeval_prompt_strict': 70., 'ifeval_prompt_loose': 80.,
         'ifeval_inst_strict': 75., 'ifeval_inst_loose': 85.},
        ['not', 'a', 'row']]}))
    with pytest.warns(UserWarning):
        rows = load_results(str(path))
    assert len(rows) == 2
    assert rows[1].ifeval == 77.5
    assert rows[1].get('mmlu_stem') == 55.
    assert pareto_points(rows)[1].reduction == pytest.approx(71.03, abs=0.01)


def test_inconsistent_average_is_flagged():
    record = dict(scheme='Q4_0', gsm8k='75.66', hellaswag='71.88', ifeval='77.46',
                  mmlu='62.20', truthfulqa_mc2='52.68', avg='70.00')
    with pytest.warns(UserWarning, match='avg'):
        parse_row(record, 'test:1')


@pytest.mark.parametrize('column,value', [
    ('gsm8k', '101'), ('size_mib', '0'), ('ppl', 'inf'), ('mmlu_stem', '-1')])
def test_out_of_range_values(column, value):
    with pytest.raises(ResultsError):
        parse_row({'scheme': 'Q4_0', column: value}, 'test:1')


def test_results_table(shipped_rows):
    table = results_table(shipped_rows)
    assert len(table) == 14
    assert table.meta['baseline'] == 'F16'
    assert int(np.sum(table['on_frontier'])) == 5
    assert set(table['dominated_by']) >= {'', 'Q5_0'}
    assert table['reduction'][0] == 0.


def test_pairs_of_frontier_points_trade_size_for_quality(shipped_rows):
    frontier = [point for point in pareto_points(shipped_rows) if point.on_frontier]
    for a, b in itertools.combinations(frontier, 2):
        if a.reduction < b.reduction:
            assert a.avg_loss < b.avg_loss
