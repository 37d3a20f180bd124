# @Author: ggufquant
# @Date:   2026-10-19
# @Filename: exceptions.py
"""Exception hierarchy of ggufquant.

Everything raised on purpose derives from `GGUFQuantError`. Errors caused by
user-supplied input (files, tensors, schemes, configuration) derive from
`InputError`; the command line maps them to a dedicated exit code.
"""


class GGUFQuantError(Exception):
    pass


class InputError(GGUFQuantError):
    pass


class SchemeError(InputError):
    pass


class ShapeError(InputError):
    pass


class QuantizationError(InputError):
    pass


class PayloadError(InputError):
    pass


class ConfigError(InputError):
    pass


class ResultsError(InputError):
    pass


class GGUFError(InputError):
    pass


class BadMagicError(GGUFError):
    pass


class UnsupportedVersionError(GGUFError):
    pass


class TruncatedFileError(GGUFError):
    """Raised when the byte source ends before a section is complete.

    Parameters
    ----------
    message : str
        Description of the truncation.
    section : str
        Section of the file that was being read ('header', 'metadata',
        'directory' or 'payload').
    tensor_index : int or None
        Index of the tensor whose directory entry or payload was cut off.

    """

    def __init__(self, message, section=None, tensor_index=None):
        super(TruncatedFileError, self).__init__(message)
        self.section = section
        self.tensor_index = tensor_index


class OverlappingTensorsError(GGUFError):
    pass


class MisalignedTensorError(GGUFError):
    pass


class MalformedFileError(GGUFError):
    pass


class UnsupportedTensorTypeError(GGUFError):
    pass


class DuplicateTensorError(GGUFError):
    pass


class UnsupportedKernelError(GGUFQuantError):
    pass


class BenchError(GGUFQuantError):
    pass
