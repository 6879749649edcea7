"""Exception hierarchy for the compositing engine.

The CLI maps these onto stable exit codes: input/config problems -> 2,
backend/transport problems -> 3, anything else -> 4.
"""


class XdcError(Exception):
    """Base class for all engine errors."""


class ShapeError(XdcError, ValueError):
    """Grid/mask dimensions do not line up."""


class FilterError(XdcError, ValueError):
    """Invalid low-pass filter factor."""


class MaskError(XdcError, ValueError):
    """Mask values violate their contract (range, binarity)."""


class PlacementError(XdcError, ValueError):
    """Pasted object footprint falls outside the canvas."""


class StepError(XdcError, ValueError):
    """Diffusion step index out of range."""


class ScheduleError(XdcError, ValueError):
    """Invalid noise-schedule parameters."""


class ConfigError(XdcError, ValueError):
    """Run configuration is inconsistent or out of range."""


class InputError(XdcError):
    """Unreadable or malformed input file."""


class DiagnosticError(XdcError):
    """A diagnostic cannot be computed (e.g. empty boundary shell)."""


class BackendError(XdcError):
    """Base class for denoiser-backend failures."""


class ProtocolError(BackendError):
    """Wire-protocol violation (bad frame, shape/step mismatch)."""


class TransportError(BackendError):
    """Connection to a remote backend failed or was lost."""


class RemoteError(BackendError):
    """The remote backend reported a failure."""
