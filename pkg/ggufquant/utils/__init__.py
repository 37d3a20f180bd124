# This sub-module is destined for common non-package specific utility
# functions.
