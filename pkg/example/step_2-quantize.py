# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: step_2-quantize.py

import os

from ggufquant.gguf_io import model_summary, read_gguf
from ggufquant.quantize import GGUFQuantize


def main():
    dirpath = 'quantization_example'
    for scheme in ['Q8_0', 'Q4_0', 'Q4_K_M', 'Q3_K_S']:
        #  Initialize the 'GGUFQuantize' class and read in the parameter settings from 'ggufquant.ini'.
        quantize = GGUFQuantize(config_file=os.path.join(dirpath, 'ggufquant.ini'))

        #  The following lines will override the corresponding parameter settings defined in 'ggufquant.ini'.

        #  Filepath to the F16 input model.
        quantize.path_to_file = os.path.join(dirpath, 'synthetic-f16.gguf')
        #  Filepath of the quantized model.
        quantize.path_to_output = os.path.join(
            dirpath, 'synthetic-{}.gguf'.format(scheme.lower()))
        #  Scheme id, see 'ggufquant.schemes.SCHEMES'.
        quantize.scheme = scheme
        #  (Optional) Number of worker threads; by default $GGUFQUANT_NUM_THREADS or 1.
        quantize.use_ncpus = 2
        #  Start the conversion.
        quantize.quantize()

        #  (Optional) Tensor formats of the written file.
        print(scheme, dict(model_summary(read_gguf(quantize.path_to_output))['formats']))


if __name__ == "__main__":
    main()
