# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: step_1-synthetic_model.py

import os

from ggufquant import config_file
from ggufquant.gguf_io import write_gguf
from ggufquant.utils.synthetic import make_synthetic_model


def main():
    #  Directory in which all files produced by the example steps are saved.
    dirpath = 'quantization_example'
    if not os.path.exists(dirpath):
        os.makedirs(dirpath)

    #  Write a configuration file with all parameters; the following steps read it in.
    config_file.make(all_keywords=True, output_directory=dirpath)

    #  A small llama-shaped model with random F16 weights. All matrix widths are
    #  multiples of 256, so every scheme (K-quants included) can be applied.
    model = make_synthetic_model(n_layers=4, hidden=512, ffn=1536, kv=128, vocab=1024,
                                 seed=111)
    write_gguf(model, os.path.join(dirpath, 'synthetic-f16.gguf'))


if __name__ == "__main__":
    main()
