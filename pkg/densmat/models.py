from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from densmat.config import settings


class RffMapSchema(BaseModel):
    """
    Serialized random Fourier feature map
    """
    gamma: float = Field(..., gt=0.0, description="Spread of the approximated kernel")
    dim_in: int = Field(..., ge=1)
    dim_out: int = Field(..., ge=1)
    seed: int
    weights: List[List[float]] = Field(..., description="dim_out x dim_in, row-major")
    biases: List[float]


class SoftmaxMapSchema(BaseModel):
    """
    Serialized landmark-softmax output map
    """
    kind: Literal["softmax"] = "softmax"
    dim: int = Field(..., ge=2)
    beta: float = Field(..., gt=0.0)


class OneHotMapSchema(BaseModel):
    """
    Serialized one-hot output map
    """
    kind: Literal["one_hot"] = "one_hot"
    dim: int = Field(..., ge=1)


class FactorizedSchema(BaseModel):
    """
    Serialized factorized density matrix V^T diag(lambda) V
    """
    rank: int = Field(..., ge=1)
    dim: int = Field(..., ge=1)
    lambda_: List[float] = Field(..., alias="lambda")
    v: List[List[float]]

    model_config = {"populate_by_name": True}


class ScalerSchema(BaseModel):
    """
    Min-max target scaler
    """
    min: float
    max: float


class DmkdeModelSchema(BaseModel):
    schema_: Literal["densmat/dmkde/v1"] = Field(default="densmat/dmkde/v1", alias="schema")
    gamma: float = Field(..., gt=0.0)
    d: int
    D: int
    r: int
    seed: int
    embedding: Literal["normalized", "raw"] = "normalized"
    trained_by: Literal["estimation", "sgd"]
    rff: RffMapSchema
    rho: FactorizedSchema

    model_config = {"populate_by_name": True}


class DmkdcModelSchema(BaseModel):
    schema_: Literal["densmat/dmkdc/v1"] = Field(default="densmat/dmkdc/v1", alias="schema")
    gamma: float = Field(..., gt=0.0)
    K: int = Field(..., ge=1)
    seed: int
    trained_by: Literal["estimation", "sgd"]
    priors: List[float]
    rff: RffMapSchema
    per_class: List[FactorizedSchema]

    model_config = {"populate_by_name": True}


class QmcModelSchema(BaseModel):
    schema_: Literal["densmat/qmc/v1"] = Field(default="densmat/qmc/v1", alias="schema")
    gamma: float = Field(..., gt=0.0)
    seed: int
    trained_by: Literal["estimation", "sgd"]
    input_map: RffMapSchema
    output_map: Union[OneHotMapSchema, SoftmaxMapSchema] = Field(..., discriminator="kind")
    joint: FactorizedSchema

    model_config = {"populate_by_name": True}


class QmrModelSchema(BaseModel):
    schema_: Literal["densmat/qmr/v1"] = Field(default="densmat/qmr/v1", alias="schema")
    base: QmcModelSchema
    alpha_tradeoff: float = Field(..., ge=0.0, lt=1.0)
    scaler: ScalerSchema

    model_config = {"populate_by_name": True}


class OptimizerConfig(BaseModel):
    """
    Gradient-descent configuration shared by every SGD fit
    """
    kind: Literal["adam", "sgd"] = Field(default="adam")
    learning_rate: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=10, ge=0)
    seed: int = Field(default=0)
    clip_norm: Optional[float] = Field(default=10.0, gt=0.0, description="Global-norm clip; None disables")
    allow_large_lr: bool = Field(default=False, description="Permit learning rates above the default range")

    @model_validator(mode="after")
    def check_learning_rate(self):
        if not self.allow_large_lr and self.learning_rate > settings.learning_rate_max:
            raise ValueError(
                f"learning_rate {self.learning_rate} outside (0, {settings.learning_rate_max}]; "
                f"set allow_large_lr to override"
            )
        return self


class GradientReport(BaseModel):
    """
    Analytic vs central-difference derivative of one parameter coordinate
    """
    parameter: str
    index: List[int]
    analytic: float
    numeric: float
    rel_error: float
    flagged: bool = False


class EpochRecord(BaseModel):
    """
    One line of the JSON-lines training log
    """
    epoch: int
    loss: float
    wall_seconds: float


class TimingRecord(BaseModel):
    """
    One row of the prediction-time sweep
    """
    method: Literal["kde", "dmkde"]
    N: int
    D: int
    r: int
    d: int
    median_seconds: float
    runs: int
    machine: str


class ConvergenceRecord(BaseModel):
    """
    Per-D summary of repeated DMKDE fits
    """
    D: int
    seeds: int
    mean_rmse_truth: Optional[float] = None
    ci95_truth: Optional[float] = None
    mean_rmse_kde: float
    median_rmse_kde: float
    ci95_kde: float
    mean_rmse_kde_vs_truth: Optional[float] = None


class FitParams(BaseModel):
    """
    Hyperparameters of one model fit
    """
    gamma: float = Field(..., gt=0.0, description="Spread of the input Gaussian kernel")
    rff_dim: int = Field(default=1024, ge=1, description="Number of random Fourier features")
    rank: Optional[int] = Field(default=None, ge=1, description="Factorization rank; model default when omitted")
    seed: int = Field(default=0)
    embedding: Literal["normalized", "raw"] = Field(default="normalized")
    landmarks: int = Field(default=16, ge=2, description="QMR landmark count")
    beta: float = Field(default=32.0, gt=0.0, description="QMR softmax shape")
    alpha_tradeoff: float = Field(default=0.1, ge=0.0, lt=1.0, description="QMR variance weight")
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)


class ExperimentConfig(BaseModel):
    """
    Parameters of one CLI command; embedded in every result file
    """
    command: str
    params: Dict[str, Any] = Field(default_factory=dict)


class ResultEnvelope(BaseModel):
    """
    Versioned result file: the config that produced it plus its metrics
    """
    schema_: Literal["densmat/result/v1"] = Field(default="densmat/result/v1", alias="schema")
    config: ExperimentConfig
    metrics: Dict[str, Any] = Field(default_factory=dict)

    model_config = {"populate_by_name": True}


class PredictRequest(BaseModel):
    """
    Request model for the predict endpoint
    """
    points: List[List[float]] = Field(..., min_length=1, description="Query points, one row per point")

    @field_validator("points")
    @classmethod
    def check_rectangular(cls, v):
        widths = {len(row) for row in v}
        if len(widths) != 1 or 0 in widths:
            raise ValueError("points must be a non-empty rectangular matrix")
        return v

    model_config = {
        "json_schema_extra": {
            "example": {"points": [[0.1, 0.2], [0.5, 0.4]]}
        }
    }


class PredictResponse(BaseModel):
    """
    Response model for the predict endpoint; fields depend on the model kind
    """
    model_config = {"protected_namespaces": ()}

    model_kind: str
    count: int
    densities: Optional[List[float]] = None
    posteriors: Optional[List[List[float]]] = None
    labels: Optional[List[int]] = None
    distributions: Optional[List[List[float]]] = None
    y_hat: Optional[List[float]] = None
    variance: Optional[List[float]] = None
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None


class ModelInfoResponse(BaseModel):
    """
    Summary of the served model
    """
    model_config = {"protected_namespaces": ()}

    schema_name: str
    model_kind: str
    trained_by: str
    input_dim: int
    feature_dim: int
    rank: int
    hyperparameters: Dict[str, Any]


class HealthResponse(BaseModel):
    """
    Health check response model
    """
    status: str
    service: str
    version: str
    model_loaded: bool


class ErrorResponse(BaseModel):
    """
    Standard error response model
    """
    error: str = Field(..., description="Error type")
    message: str = Field(..., description="Error message")
    detail: Optional[Dict[str, Any]] = Field(None, description="Diagnostics")
