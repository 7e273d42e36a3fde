# Enums and constants shared by the numerical core and the CLI.

from enum import Enum, IntEnum


# >= Py 3.11, there is a built-in StrEnum, however,
# we still support older versions of Python.
# Hence, a custom implementation for now.
class StringEnum(str, Enum):
    def __str__(self) -> str:
        return str(self.value)

    @classmethod
    def to_list(cls) -> list[str]:
        return [member.value for member in cls]


class CaseTag(StringEnum):
    """
    Which multiplicity theorem a set of fractional parameters falls under.
    """

    CASE_I = "CaseI"
    CASE_II = "CaseII"
    NEITHER = "Neither"


class CertificateKind(StringEnum):
    CASE1 = "case1"
    CASE2 = "case2"
    COROLLARY = "corollary"
    EXAMPLE31 = "example31"


class NonlinearityKind(StringEnum):
    POLYNOMIAL = "polynomial"
    ABS_POWER = "abs_power"
    TABULATED = "tabulated"
    EXAMPLE31 = "example31"


class PairClass(StringEnum):
    """
    The three blocks of the cross-shaped pair set; exterior x exterior never occurs.
    """

    INTERIOR_INTERIOR = "interior-interior"
    INTERIOR_EXTERIOR = "interior-exterior"
    EXTERIOR_INTERIOR = "exterior-interior"


class ExitCode(IntEnum):
    INPUT_ERROR = 1
    HYPOTHESIS_FAILURE = 2
