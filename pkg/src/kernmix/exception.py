class KernmixError(Exception):
    ...


class ValidationError(KernmixError):
    ...


class DegenerateCovariance(KernmixError):
    ...


class KernelSupportError(KernmixError):
    ...


class VanishedCluster(KernmixError):
    ...


class ParseError(KernmixError):
    ...


class ConfigError(KernmixError):
    ...
