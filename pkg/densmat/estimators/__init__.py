from .feature_maps import (
    OneHotMap,
    RffMap,
    SoftmaxMap,
    apply_output_map,
    apply_rff,
    apply_rff_normalized,
    apply_softmax_map,
    build_rff,
    build_softmax_map,
    one_hot,
)
from .density_ops import (
    ConditionalState,
    DensityAccumulator,
    FactorizedDensityMatrix,
    IncrementalFactorizer,
    born_probability,
    estimate_density_matrix,
    factorize,
    factorize_embeddings,
    measure_and_collapse,
    partial_trace_x,
    tensor_embed,
)
from .eigensolver import jacobi_eigh, symmetric_eigh
from .dmkde import DmkdeModel
from .dmkdc import DmkdcModel
from .qmc import QmcModel
from .qmr import QmrModel, TargetScaler
from .baseline_kde import KdeModel, RffLinearKde

__all__ = [
    "OneHotMap",
    "RffMap",
    "SoftmaxMap",
    "apply_output_map",
    "apply_rff",
    "apply_rff_normalized",
    "apply_softmax_map",
    "build_rff",
    "build_softmax_map",
    "one_hot",
    "ConditionalState",
    "DensityAccumulator",
    "FactorizedDensityMatrix",
    "IncrementalFactorizer",
    "born_probability",
    "estimate_density_matrix",
    "factorize",
    "factorize_embeddings",
    "measure_and_collapse",
    "partial_trace_x",
    "tensor_embed",
    "jacobi_eigh",
    "symmetric_eigh",
    "DmkdeModel",
    "DmkdcModel",
    "QmcModel",
    "QmrModel",
    "TargetScaler",
    "KdeModel",
    "RffLinearKde",
]
