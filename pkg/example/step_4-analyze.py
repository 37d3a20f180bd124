# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: step_4-analyze.py

from ggufquant.analysis import SCENARIOS, load_results, pareto_points, recommend_scenario
from ggufquant.plotting import emit_report


def main():
    #  Shipped evaluation of Llama-3.1-8B-Instruct; pass the path of your own CSV
    #  or JSON results file to analyze other measurements.
    rows = load_results()

    for point in pareto_points(rows, baseline='F16'):
        status = 'frontier' if point.on_frontier else 'dominated by {}'.format(
            point.dominated_by)
        print('{:<8} reduction {:6.2f}%  AvgLoss {:6.2f}%  {}'.format(
            point.scheme_id, point.reduction, point.avg_loss, status))

    for scenario, settings in SCENARIOS.items():
        recommendation = recommend_scenario(rows, scenario)
        print('{} ({}): {}'.format(scenario, settings['description'],
                                   ', '.join(recommendation.ranking[:3])))

    #  Text table and Pareto plot.
    emit_report(rows, output_directory='quantization_example', basename='llama-3.1-8b')


if __name__ == "__main__":
    main()
