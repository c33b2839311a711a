"""Exception hierarchy. ``exit_code`` is what the CLI returns for each family."""


class ImrkpmError(Exception):
    exit_code = 1


class ParameterError(ImrkpmError, ValueError):
    """A physical or numerical parameter is outside its admissible range."""


class ConfigError(ImrkpmError):
    def __init__(self, message, path=None, line=None, key=None):
        self.path = path
        self.line = line
        self.key = key
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ImageFormatError(ImrkpmError):
    exit_code = 3


class DegenerateInputError(ImrkpmError, ValueError):
    pass


class TrainingError(ImrkpmError):
    pass


class ConvergenceError(ImrkpmError):
    exit_code = 2

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateGradientError(ImrkpmError, ArithmeticError):
    pass


class ClassificationError(ImrkpmError):
    pass


class CoverageError(ImrkpmError):
    exit_code = 2

    def __init__(self, message, point=None, n_nodes=None):
        super().__init__(message)
        self.point = point
        self.n_nodes = n_nodes


class SolverError(ImrkpmError):
    exit_code = 2

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class MissingFileError(ImrkpmError, FileNotFoundError):
    exit_code = 3


class OutputError(ImrkpmError, OSError):
    exit_code = 3
