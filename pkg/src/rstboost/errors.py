"""Exception hierarchy shared by all rstboost modules."""


class RstBoostError(Exception):
    """Base class for all toolkit errors."""


class MalformedSyntax(RstBoostError):
    """Bracketed input that cannot be tokenized or parsed."""


class InvalidTree(RstBoostError):
    """A structurally invalid discourse tree (non-binary node, bad label, ...)."""


class InvalidConfig(RstBoostError):
    """A configuration object violates its invariants."""


class InvalidInput(RstBoostError):
    """An argument outside an operation's documented domain."""


class IllegalAction(RstBoostError):
    """A shift-reduce action applied in a state where it is not legal."""


class IncompleteParse(RstBoostError):
    """An action sequence that does not end in a terminal parser state."""


class DimensionMismatch(RstBoostError):
    """Array or configuration dimensions that do not line up."""


class IllegalGold(RstBoostError):
    """A gold label that is masked out as illegal in its state."""


class InvalidPrefix(RstBoostError):
    """An ensemble prefix index outside 1..len(steps)."""


class TerminalState(RstBoostError):
    """An action was requested for a state that is already terminal."""


class EmptyTreebank(RstBoostError):
    """An operation that needs at least one treebank entry got none."""


class DocumentMismatch(RstBoostError):
    """Two trees or treebanks that are being compared cover different documents."""


class RelationInventoryMismatch(RstBoostError):
    """An evaluation treebank uses relations unknown to the model."""
