from typing import Any, Optional, Sequence, Tuple


class InvalidLabelError(ValueError):
    """Label map contains a class index outside ``[0, C)`` that is not the ignore value"""
    def __init__(self, pixel: Tuple[int, int], value: int, num_classes: int):
        self.pixel = pixel
        super().__init__(f"Invalid label {value} at pixel {pixel}: expected a value in [0, {num_classes}) or IGNORE")


class ShapeMismatchError(ValueError):
    """Two grids that must agree in shape do not"""
    def __init__(self, what: str, expected: Sequence[int], got: Sequence[int]):
        super().__init__(f"{what}: expected shape {tuple(expected)}, got {tuple(got)}")


class TensorFormatError(ValueError):
    "Serialized tensor is malformed (bad magic bytes, unknown kind, truncated payload)"
    pass


class ConfigurationError(ValueError):
    """Configuration value violates a constraint

    :param str key: Dotted key of the offending value
    :param str constraint: Human readable description of the violated constraint
    """
    def __init__(self, key: str, constraint: str):
        self.key = key
        self.constraint = constraint
        super().__init__(f"{key}: {constraint}")


class MaskRangeError(ValueError):
    """Grid mask refers to a target index that was not supplied"""
    def __init__(self, value: int, num_targets: int):
        super().__init__(f"Grid mask value {value} outside [1, {num_targets}]")


class InsufficientSamplesError(ValueError):
    def __init__(self, tag: str, count: int, minimum: int):
        super().__init__(f"Sample set '{tag}' has {count} samples, at least {minimum} required")


class EmptySplitError(ValueError):
    "Evaluation or training was asked to run on a split with no samples"
    pass


class DivergenceError(RuntimeError):
    """Training loss exceeded the divergence guard"""
    def __init__(self, iteration: int, loss: float, initial: float):
        super().__init__(f"Loss {loss:.4f} at iteration {iteration} diverged from the initial loss {initial:.4f}")


class NonFiniteGradientError(RuntimeError):
    def __init__(self, where: str):
        super().__init__(f"Non-finite values in {where}")


class CombinatorialExplosionError(RuntimeError):
    """Exhaustive enumeration would visit more combinations than allowed"""
    def __init__(self, count: int, limit: int):
        super().__init__(f"Enumeration needs {count} combinations, limit is {limit}")


class DegenerateRectangleError(RuntimeError):
    def __init__(self, attempts: int):
        super().__init__(f"No non-empty cut rectangle after {attempts} draws")


class ExperimentAbortedError(RuntimeError):
    """A multi-run experiment failed part way through. ``partial`` holds the results collected so far."""
    def __init__(self, cause: BaseException, partial: Optional[Any] = None):
        self.partial = partial
        super().__init__(f"Experiment aborted: {cause}")
