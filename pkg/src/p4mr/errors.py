"""Exception hierarchy. Every domain failure derives from P4mrError."""


class P4mrError(Exception):
    pass


# -- frontend ---------------------------------------------------------------

class DslSyntaxError(P4mrError):
    def __init__(self, message, line, column, expected=None):
        self.line = line
        self.column = column
        self.expected = expected
        where = f"line {line}, column {column}"
        if expected:
            message = f"{message} (expected {expected})"
        super().__init__(f"{where}: {message}")


class DuplicateLabel(P4mrError):
    pass


class UndefinedReference(P4mrError):
    def __init__(self, name, line=None, column=None):
        self.name = name
        self.line = line
        self.column = column
        site = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"undefined label {name!r}{site}")


class UnknownType(P4mrError):
    pass


class UnknownTransform(P4mrError):
    pass


class KindMismatch(P4mrError):
    """SUM over an integer stream and a keyed (word-count) stream, or similar."""


class SchemaError(P4mrError):
    def __init__(self, field, detail=""):
        self.field = field
        super().__init__(f"{field}: {detail}" if detail else field)


# -- planning ---------------------------------------------------------------

class DisconnectedTopology(P4mrError):
    pass


class DuplicateId(P4mrError):
    pass


class NonPositiveCapacity(P4mrError, ValueError):
    pass


class UnknownHost(P4mrError):
    pass


class RoutingIdOverflow(P4mrError):
    pass


# -- wire -------------------------------------------------------------------

class BadPreamble(P4mrError):
    pass


class TruncatedFrame(P4mrError):
    pass


class ZeroOrigin(P4mrError, ValueError):
    pass


class WordTooLong(P4mrError, ValueError):
    pass


class MtuTooSmall(P4mrError, ValueError):
    pass


# -- simulation / model -----------------------------------------------------

class StallDetected(P4mrError):
    def __init__(self, blocked, time):
        self.blocked = sorted(blocked)
        self.time = time
        super().__init__(f"simulation stalled at t={time!r}; blocked labels: {self.blocked}")


class UnsupportedProgram(P4mrError):
    pass


class DatasetError(P4mrError):
    pass


class EmptyTrace(P4mrError):
    pass


class InvalidParams(P4mrError, ValueError):
    pass


class ZeroDenominator(P4mrError, ZeroDivisionError):
    pass
