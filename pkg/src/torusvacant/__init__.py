"""Monte Carlo toolkit for the vacant set left by simple random walk on a
discrete torus: walk simulation with streaming excursion observers,
vacant-set geometry and events, infinite-lattice potential theory, the
conditioned-excursion coupling study, and a reproducible experiment harness.
"""

from .lattice import (
    AxisLine, CoordinatePlane, TorusGeometry, axis_lines, ball,
    coordinate_planes, linf_dist, plane_diameter, sphere, step,
)
from .walk_engine import (
    ExcursionObserver, ExcursionSchedule, OccupancyGrid, WalkConfig,
    count_box_excursions, excursion_schedule, run_walk,
)
from .vacancy_analysis import (
    EventReport, LocalFunctionSpec, VacantComponents, coverage_probability,
    detect_C, detect_G, detect_U, detect_V, gamma_tilde, largest_vacant_ball,
    local_function_average, vacant_components, vacant_fraction,
)
from .potential_theory import (
    ConstantsReport, HarmonicProfile, QPath, ReturnProbability,
    constants_report, harmonic_measure, q_N_finite, q_nu_montecarlo,
    q_nu_quadrature, q_path_probability, sample_Q, star_saw_count,
)
from .coupling_lab import (
    ExcursionSampleSet, SummaryHistogram, TvEstimate, build_histogram,
    maximal_coupling, sample_Quw, tv_distance, tv_scaling_study,
)
from .zd_walk import run_zd_walk

__version__ = "0.1.0"
