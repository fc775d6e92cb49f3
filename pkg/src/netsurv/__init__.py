"""Non-parametric net survival analysis driven by population rate tables."""

from ._parallel import get_num_threads, set_num_threads
from .cohort import (
    AxisBinding,
    Cohort,
    FormulaSpec,
    bind_axes,
    cut,
    parse_cohort_csv,
    parse_formula,
    render_formula,
)
from .crude import CrudeMortality, crude_mortality
from .errors import (
    ComputationError,
    DivergentExpectationError,
    NetSurvError,
    ValidationError,
)
from .estimators import (
    DailyGrid,
    Method,
    NetSurvivalFit,
    SurvivalFit,
    confint,
    counting_increments,
    fit_net_survival,
    kaplan_meier,
    population_terms,
)
from .inference import GraffeoResult, chisq_sf, graffeo_test
from .nessie import NessieResult, nessie
from .ratetable import (
    YEAR,
    BasicRateTable,
    Life,
    RateTable,
    clf,
    cumulative_hazard,
    daily_hazard,
    demo_ratetable,
    expectation,
    from_annual_probabilities,
    load_hmd_csv,
    read_ratetable,
    sample,
    survival,
    write_ratetable,
)

__version__ = "0.1.0"
