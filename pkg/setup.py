#!/usr/bin/env python
# Licensed under a 3-clause BSD style license - see LICENSE.rst

import sys
from configparser import ConfigParser

from setuptools import find_packages, setup

# Get some values from the setup.cfg
conf = ConfigParser()
conf.read(['setup.cfg'])
metadata = dict(conf.items('metadata'))

PACKAGENAME = metadata.get('package_name', 'ggufquant')
DESCRIPTION = metadata.get('description', 'ggufquant: block quantization of GGUF models')
AUTHOR = metadata.get('author', '')
LICENSE = metadata.get('license', 'unknown')
URL = metadata.get('url', '')
VERSION = metadata.get('version', '0.1.dev')
__minimum_python_version__ = metadata.get("minimum_python_version", "3.6")

# Enforce Python version check - this is the same check as in __init__.py
if sys.version_info < tuple((int(val) for val in __minimum_python_version__.split('.'))):
    sys.stderr.write("ERROR: ggufquant requires Python {} or later\n".format(
        __minimum_python_version__))
    sys.exit(1)

with open('README.md', encoding='utf-8') as f:
    LONG_DESCRIPTION = f.read()

# Define entry points for command-line scripts
entry_points = {'console_scripts': []}

if conf.has_section('entry_points'):
    entry_point_list = conf.items('entry_points')
    for entry_point in entry_point_list:
        entry_points['console_scripts'].append('{0} = {1}'.format(
            entry_point[0], entry_point[1]))

setup(name=PACKAGENAME,
      version=VERSION,
      description=DESCRIPTION,
      install_requires=[s.strip() for s in metadata.get('install_requires', 'numpy').split(',')],
      tests_require=[s.strip() for s in metadata.get('tests_require', 'pytest').split(',')],
      author=AUTHOR,
      license=LICENSE,
      url=URL,
      long_description=LONG_DESCRIPTION,
      long_description_content_type='text/markdown',
      packages=find_packages(exclude=['examples', 'examples.*']),
      package_data={PACKAGENAME: ['data/*']},
      zip_safe=False,
      entry_points=entry_points,
      python_requires='>={}'.format(__minimum_python_version__),
      )
