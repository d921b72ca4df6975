"""Exception hierarchy shared by all gsmkit modules."""


class GsmError(Exception):
    """Base class for every error raised by gsmkit."""

    code = "gsm_error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class SingularSystem(GsmError):
    code = "singular_system"


class RankDeficientRegression(GsmError):
    code = "rank_deficient_regression"


class AllStartsFailed(GsmError):
    code = "all_starts_failed"


class DomainEscape(GsmError):
    code = "domain_escape"


class NoDescent(GsmError):
    code = "no_descent"


class DegenerateSpectrum(GsmError):
    code = "degenerate_spectrum"

    def __init__(self, message, numerical_rank=None):
        super().__init__(message)
        self.numerical_rank = numerical_rank

    def to_dict(self):
        out = super().to_dict()
        out["numerical_rank"] = self.numerical_rank
        return out


class RankDeficient(GsmError):
    code = "rank_deficient"


class ZeroTrend(GsmError):
    code = "zero_trend"


class DegenerateValidation(GsmError):
    code = "degenerate_validation"


class StaleArtifact(GsmError):
    code = "stale_artifact"


class ConfigError(GsmError):
    code = "config_error"
