"""cqedkit: superconducting circuit layouts to EM solver inputs, and solver
outputs to quantized circuit Hamiltonians."""

from .analytic import CpwAnalytic, cpw_caps, ellipe, ellipk, quarter_wave_freq
from .gdsii import GdsElement, GdsLibrary, GdsStructure, flatten, parse_gds, write_gds
from .layout import (CpwSpec, JunctionSite, LayoutModel, PortSite, build_layout,
                     heal_curves, infer_cpw, junction_inductance, load_annotations)
from .meshplan import MeshControls, MeshPlan, build_plan, emit_mesh_script, min_mesh_size
from .orchestrate import Job, SweepResult, run_job, run_sweep
from .quantize import (HamiltonianSpec, charging_energy, epr_kerr, josephson_energy,
                       lom_reduce, transmon_frequency)
from .report import build_report, render_report_csv, render_report_text
from .results import (MaxwellCapMatrix, ModeResult, SParamSet, filter_modes,
                      load_modes, maxwell_to_mutual, parse_cap_csv, parse_eig_csv,
                      parse_epr_csv, parse_sparams_csv)
from .solvercfg import (Material, SolveSpec, make_driven, make_eigenmode,
                        make_electrostatic, parse_spec, serialize_spec)
from .specfit import (ConvergencePoint, FitResult, check_convergence_criterion,
                      fit_notch, kappa_from_q, notch_model, richardson_extrapolate)

__version__ = "0.1.0"
