from typing import TYPE_CHECKING, Dict, Type

from exsparse.atoms_base import AtomFamily
from exsparse.atoms_measures import DiracFamily
from exsparse.atoms_splines import GreenFamily
from exsparse.atoms_tv1d import StepFamily

if TYPE_CHECKING:
    from exsparse.core_model import ProblemSpec

# Keyed by Kind.value
FAMILIES: Dict[str, Type[AtomFamily]] = {
    "measures": DiracFamily,
    "tv1d": StepFamily,
    "spline": GreenFamily,
}


def family_for(spec: "ProblemSpec") -> AtomFamily:
    return FAMILIES[spec.kind.value](spec)
