# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: __init__.py
"""
This module contains package tests.
"""
