"""Exception hierarchy shared by every stage of the detector."""


class RorScanError(Exception):
    """Base class for all errors raised by rorscan."""


class SnapshotError(RorScanError):
    """The snapshot file is malformed or fails schema validation."""


class DanglingReferenceError(SnapshotError):
    """A snapshot entry refers to a transaction, contract or IR that does not exist."""


class UnknownContractError(RorScanError):
    pass


class UnknownTransactionError(RorScanError):
    pass


class BuilderCycleError(RorScanError):
    """The factory chain of a contract revisits an address."""


class IRError(RorScanError):
    """Contract IR document does not conform to the schema."""


class UnboundIdentifierError(IRError):
    pass


class InternalFunctionError(RorScanError):
    """An ABI was requested for a function that is not externally callable."""


class ReplayError(RorScanError):
    """A transaction cannot be replayed at all (as opposed to reverting)."""


class UnknownSelectorError(ReplayError):
    pass


class MalformedCalldataError(ReplayError):
    pass


class RpcError(RorScanError):
    pass


class ConfigError(RorScanError):
    pass
