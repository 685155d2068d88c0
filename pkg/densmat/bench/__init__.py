from .experiments import (
    EVAL_TASKS,
    convergence_study,
    evaluate,
    result_json,
    rmse,
    write_records_csv,
    write_result,
)
from .search import median_heuristic_gamma, random_search

__all__ = [
    "EVAL_TASKS",
    "convergence_study",
    "evaluate",
    "result_json",
    "rmse",
    "write_records_csv",
    "write_result",
    "median_heuristic_gamma",
    "random_search",
]
