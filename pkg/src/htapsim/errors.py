"""Exception types shared across the engine, simulator, and harness."""


class HtapError(Exception):
    """Base class for all htapsim errors."""


class ConfigError(HtapError):
    """A config file or config value is invalid. Carries a field-level message."""


class OutOfOrderInstall(HtapError):
    """A row version was installed with a commit timestamp at or before the
    open version's begin timestamp."""


class ChunkCapacityExceeded(HtapError):
    """A column chunk ran out of slots; raise rather than silently spill."""


class SnapshotTooOld(HtapError):
    """The version set covering the requested timestamp was garbage collected."""


class TxnNotActive(HtapError):
    """Operation on a transaction that already committed or aborted."""


class WriteWriteConflict(HtapError):
    """First-committer-wins validation failed; the transaction is aborted."""


class MalformedHistory(HtapError):
    """A history handed to the checker is structurally broken (incomplete
    transactions, duplicate commits, events before begin, ...)."""


class OutOfOrderDelta(HtapError):
    """Delta enqueued with a commit timestamp not above the previous one."""


class GapInDeltaStream(HtapError):
    """A batch is not contiguous with the already-applied delta prefix."""


class PlanError(HtapError):
    """Query plan references unknown columns, mismatched types, or cannot
    be parsed from its textual form."""


class InvalidDemand(HtapError):
    """A task demand contains negative or non-finite amounts."""


class StalledSimulation(HtapError):
    """No resource made progress in an epoch although tasks remain active."""
