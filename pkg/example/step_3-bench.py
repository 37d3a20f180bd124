# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: step_3-bench.py

import os

from ggufquant.bench import ThroughputBench


def main():
    dirpath = 'quantization_example'
    for scheme in ['Q8_0', 'Q4_0', 'Q4_K_M']:
        #  Initialize the 'ThroughputBench' class and read in the parameter settings from 'ggufquant.ini'.
        bench = ThroughputBench(config_file=os.path.join(dirpath, 'ggufquant.ini'))

        #  Quantized model written in step 2; without a model file the benchmark
        #  runs a synthetic layer stack of the configured dimensions.
        bench.path_to_file = os.path.join(dirpath, 'synthetic-{}.gguf'.format(scheme.lower()))
        bench.scheme = scheme
        #  Prompt tokens of the prefill test and generated tokens of the decode test.
        bench.n_prompt = 128
        bench.n_gen = 32
        #  Timed repeats; at least 5 are required.
        bench.repeats = 5
        for result in bench.bench():
            print('{} {}: {:.2f} +/- {:.2f} tokens/s'.format(
                result.scheme_id, result.test, result.tokens_per_second, result.std))


if __name__ == "__main__":
    main()
