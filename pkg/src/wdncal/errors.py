"""Exception hierarchy shared across the package."""


class WdnCalError(Exception):
    """Base class for all package errors."""


class InpSyntaxError(WdnCalError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedElementError(WdnCalError):
    def __init__(self, section: str, line: int | None = None):
        self.section = section
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unsupported section {section}{where}")


class NetworkError(WdnCalError):
    """Structural problem in a network (duplicate ids, dangling endpoints)."""


class InfeasibleConfigError(WdnCalError):
    pass


class SingularSystemError(WdnCalError):
    pass


class NoStableWindowError(WdnCalError):
    pass


class PreprocessError(WdnCalError):
    pass


class SurrogateDivergenceError(WdnCalError):
    def __init__(self, message: str, hyperparams: dict | None = None):
        self.hyperparams = hyperparams or {}
        super().__init__(f"{message} (hyperparams={self.hyperparams})")


class RetryBudgetExhausted(WdnCalError):
    pass


class CalibrationError(WdnCalError):
    """Optimizer-level failure; `stage` names the failing step."""

    def __init__(self, message: str, stage: str | None = None):
        self.stage = stage
        if stage:
            message = f"[{stage}] {message}"
        super().__init__(message)


class ClusteringError(WdnCalError):
    pass


class StatisticsError(WdnCalError):
    pass


class FoldCoverageError(WdnCalError):
    pass
