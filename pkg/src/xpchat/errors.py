"""Exception hierarchy shared across the library."""


class XpError(Exception):
    """Base class for all library errors."""


# --- typology graph ---

class SchemaError(XpError):
    """Document or message does not conform to its schema."""


class DanglingReference(XpError):
    """An identifier points at nothing."""


class DuplicateId(XpError):
    """The same identifier was declared twice."""


class UnknownUserGroup(XpError):
    pass


class UnknownQuestion(XpError):
    pass


# --- behaviour tree ---

class InvalidGraph(XpError):
    """Graph cannot be turned into a usable dialogue tree."""


class HandlerError(XpError):
    """An action handler failed; surfaces as a Failure tick."""


# --- explainers ---

class DegenerateData(XpError):
    pass


class InvalidInstance(XpError):
    pass


class NoCounterfactualFound(XpError):
    pass


class KTooLarge(XpError):
    pass


class NoAnchorFound(XpError):
    pass


class UnknownFeature(XpError):
    pass


class UnsupportedPayload(XpError):
    pass


class UnknownFollowupEdge(XpError):
    pass


# --- sessions ---

class DuplicateActiveSession(XpError):
    pass


class UnknownSession(XpError):
    pass


class IncompleteQuestionnaire(XpError):
    pass


# --- analytics ---

class EmptySession(XpError):
    pass


class SpecMismatch(XpError):
    pass
