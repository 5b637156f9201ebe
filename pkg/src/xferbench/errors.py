"""Exception hierarchy shared by every xferbench module."""


class XferBenchError(Exception):
    """Base class for all errors raised by xferbench."""


# stages
class EmptyAfterFilter(XferBenchError):
    pass


class NoSleepPeriod(XferBenchError):
    pass


class EmptyInput(XferBenchError, ValueError):
    pass


# synthgen
class InvalidParams(XferBenchError, ValueError):
    pass


class TooFewSubjects(XferBenchError, ValueError):
    pass


class FormatError(XferBenchError):
    pass


# signals
class InvalidRate(XferBenchError, ValueError):
    pass


class RateTooLow(XferBenchError, ValueError):
    pass


# scorer
class EmptySet(XferBenchError, ValueError):
    pass


class NonFiniteLoss(XferBenchError, ArithmeticError):
    pass


class IncompatibleInputSpec(XferBenchError, ValueError):
    pass


# metrics
class LengthMismatch(XferBenchError, ValueError):
    pass


class EmptyMatrix(XferBenchError, ValueError):
    pass


# plan
class EmptyUniverse(XferBenchError, ValueError):
    pass


# transferscore
class DivisionByZero(XferBenchError, ZeroDivisionError):
    pass


class NotAntisymmetric(XferBenchError, ValueError):
    pass


class NonPositiveEntry(XferBenchError, ValueError):
    pass


class MissingRecord(XferBenchError, KeyError):
    """One or more ledger records needed for an analysis are absent.

    ``keys`` holds the missing ``(setting, source, target, repeat)`` tuples.
    """

    def __init__(self, keys):
        self.keys = list(keys)
        shown = ", ".join(_fmt_key(k) for k in self.keys[:10])
        more = f" (+{len(self.keys) - 10} more)" if len(self.keys) > 10 else ""
        super().__init__(f"missing ledger record(s): {shown}{more}")

    def __str__(self):
        return self.args[0]

    def __reduce__(self):
        return type(self), (self.keys,)


# bench_cli / ledger
class DuplicateRecord(XferBenchError, ValueError):
    pass


class LedgerMismatch(XferBenchError, ValueError):
    pass


class JobFailed(XferBenchError):
    """A study job raised; ``job`` names the offending job key."""

    def __init__(self, job, cause):
        self.job = job
        self.cause = cause
        super().__init__(f"job {job} failed: {cause!r}")

    def __reduce__(self):
        return type(self), (self.job, self.cause)


def _fmt_key(key):
    setting, source, target, repeat = key
    src = "-" if source is None else str(source)
    rep = "*" if repeat is None else repeat
    return f"({setting}, {src} -> {target}, repeat={rep})"
