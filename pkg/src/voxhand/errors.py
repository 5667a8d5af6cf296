"""Exception taxonomy shared across modules."""


class VoxhandError(Exception):
    """Base class for all package-specific failures."""


class DataFormatError(VoxhandError):
    """A file, manifest, or record could not be parsed or validated."""


class ExemplarBuildError(VoxhandError):
    """A training crop was too empty or ill-posed to become a template."""
