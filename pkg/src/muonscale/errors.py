"""Exception types shared by the optimizers, problems and harness."""


class ConfigError(ValueError):
    """Invalid configuration, shape mismatch or violated precondition."""


class DegenerateInputError(ValueError):
    """Input for which an operation is undefined (e.g. zero matrix in Newton-Schulz)."""


class OracleError(ValueError):
    """An oracle received input it cannot evaluate reliably."""


class DivergenceError(RuntimeError):
    def __init__(self, step, value=float("nan")):
        super().__init__(f"non-finite objective {value!r} at step {step}")
        self.step = step
        self.value = value


class InvariantError(AssertionError):
    """A lemma-level inequality or identity failed at runtime.

    ``lemma`` is the human-readable invariant name, ``step`` the iteration
    index where it failed, ``margin`` the signed slack (negative = violated).
    """

    def __init__(self, lemma, step, margin, detail=""):
        msg = f"{lemma} violated at step {step} (margin {margin:.3e})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.lemma = lemma
        self.step = step
        self.margin = margin
        self.detail = detail
