"""Numerics for b^m-contact forms: Reeb fields on and off the critical set,
flows, orbit certificates and a gallery of example systems."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .jets import Jet2, jet_eval, variables  # noqa: F401
from .forms import FormValue, SingularOneForm, contract, wedge  # noqa: F401
from .dsl import parse_expr, parse_oneform, pretty  # noqa: F401
from .system import SystemSpec, load_system, parse_system, sample_points  # noqa: F401
from .reeb import (contact_coefficient, decompose_on_Z, desingularize_even,  # noqa: F401
                   liouville_level_set, r_plus_invariance_check, reeb_field, reeb_off_Z,
                   reeb_on_Z, symplectization_check)
from .flow import (OrbitTrace, SectionSpec, conservation_drift, integrate,  # noqa: F401
                   section_crossings)
from .orbits import (detect_singular_orbit, find_zeros_on_Z, periodic_from_seed,  # noqa: F401
                     refine_periodic, scan_periodic, trap_diagnostics, witness_check)
from .gallery import builtin, infinity_cylinder_point, rpc3bp_hamiltonian, transform  # noqa: F401
from .verify import VerificationReport, verify_system  # noqa: F401
