from typing import Optional, TextIO
import logging

import numpy as np

from densmat.estimators import dmkdc, dmkde, qmc, qmr
from densmat.estimators.feature_maps import OneHotMap
from densmat.exceptions import InvalidArgumentError
from densmat.models import FitParams, ModelInfoResponse, PredictResponse
from densmat.storage.model_store import SCHEMAS, Model, model_kind

logger = logging.getLogger(__name__)

MODEL_KINDS = ("dmkde", "dmkdc", "qmc", "qmr")
STRATEGIES = ("estimate", "sgd")


class ModelService:
    """
    Fit, predict and describe any of the four model kinds behind one interface
    """

    def __init__(self):
        self.kinds = MODEL_KINDS
        logger.debug("Model service initialized")

    def default_rank(self, params: FitParams) -> int:
        return params.rank or max(1, params.rff_dim // 5)

    def fit(
        self,
        kind: str,
        strategy: str,
        X: np.ndarray,
        y: Optional[np.ndarray],
        params: FitParams,
        log_sink: Optional[TextIO] = None,
    ) -> Model:
        """
        Train a model of the given kind

        Args:
            kind: dmkde, dmkdc, qmc or qmr
            strategy: "estimate" (optimization-free) or "sgd"
            X: N x d inputs
            y: Labels 1..K (dmkdc, qmc) or real targets (qmr); ignored for dmkde
            params: Hyperparameters
            log_sink: Optional JSON-lines epoch log for SGD

        Returns:
            Trained model
        """
        if kind not in MODEL_KINDS:
            raise InvalidArgumentError(f"unknown model kind '{kind}'; expected one of {', '.join(MODEL_KINDS)}")
        if strategy not in STRATEGIES:
            raise InvalidArgumentError(f"unknown strategy '{strategy}'; expected estimate or sgd")
        if kind != "dmkde" and y is None:
            raise InvalidArgumentError(f"{kind} needs a label column")

        try:
            logger.info(f"Fitting {kind} by {strategy} on {X.shape[0]} samples")
            sgd = strategy == "sgd"
            D = params.rff_dim

            if kind == "dmkde":
                r = self.default_rank(params)
                if sgd:
                    return dmkde.fit_sgd(X, params.gamma, D, r, params.seed, params.optimizer, log_sink,
                                         embedding=params.embedding)
                return dmkde.fit_estimation(X, params.gamma, D, r, params.seed, embedding=params.embedding)

            if kind == "dmkdc":
                r = self.default_rank(params)
                if sgd:
                    return dmkdc.fit_sgd(X, y, params.gamma, D, r, params.seed, params.optimizer, log_sink)
                return dmkdc.fit_estimation(X, y, params.gamma, D, r, params.seed)

            if kind == "qmc":
                labels, K = dmkdc.check_labels(y, X.shape[0])
                if sgd:
                    return qmc.fit_sgd(X, labels, params.gamma, D, OneHotMap(K), r=params.rank,
                                       seed=params.seed, optimizer=params.optimizer, log_sink=log_sink)
                return qmc.fit_estimation(X, labels, params.gamma, D, OneHotMap(K), r=params.rank, seed=params.seed)

            common = dict(r=params.rank, seed=params.seed, alpha_tradeoff=params.alpha_tradeoff)
            if sgd:
                return qmr.fit_sgd(X, y, params.gamma, D, params.landmarks, params.beta,
                                   optimizer=params.optimizer, log_sink=log_sink, **common)
            return qmr.fit_estimation(X, y, params.gamma, D, params.landmarks, params.beta, **common)

        except Exception as e:
            logger.error(f"Fitting {kind} failed: {str(e)}")
            raise

    def predict(self, model: Model, X: np.ndarray) -> PredictResponse:
        """
        Model-kind-specific predictions for a batch of points
        """
        kind = model_kind(model)
        X = np.asarray(X, dtype=np.float64)
        if kind == "dmkde":
            densities = dmkde.density(model, X)
            return PredictResponse(model_kind=kind, count=len(densities), densities=densities.tolist())
        if kind == "dmkdc":
            post = dmkdc.posterior(model, X)
            return PredictResponse(
                model_kind=kind,
                count=post.shape[0],
                posteriors=post.tolist(),
                labels=(np.argmax(post, axis=1) + 1).tolist(),
            )
        if kind == "qmc":
            diag = qmc.predict_distribution(model, X).diag
            return PredictResponse(
                model_kind=kind,
                count=diag.shape[0],
                distributions=diag.tolist(),
                labels=(np.argmax(diag, axis=1) + 1).tolist(),
            )
        pred = qmr.predict(model, X)
        return PredictResponse(
            model_kind=kind,
            count=pred.y_hat.shape[0],
            distributions=pred.distribution.tolist(),
            y_hat=pred.y_hat.tolist(),
            variance=pred.variance.tolist(),
            lower=pred.lower.tolist(),
            upper=pred.upper.tolist(),
        )

    def describe(self, model: Model) -> ModelInfoResponse:
        kind = model_kind(model)
        schema_name = next(name for name in SCHEMAS if name.split("/")[1] == kind)
        if kind == "dmkde":
            rff, rank, trained_by = model.rff, model.rho.rank, model.trained_by
            hyper = {"gamma": model.gamma, "embedding": model.embedding, "seed": model.seed}
        elif kind == "dmkdc":
            rff, rank, trained_by = model.rff, model.per_class[0].rank, model.trained_by
            hyper = {"gamma": model.gamma, "classes": model.n_classes, "priors": model.priors.tolist(), "seed": model.seed}
        else:
            base = model if kind == "qmc" else model.base
            rff, rank, trained_by = base.input_map, base.joint.rank, base.trained_by
            hyper = {"gamma": base.gamma, "output_dim": base.dy, "seed": base.seed}
            if kind == "qmr":
                hyper.update(
                    beta=base.output_map.beta,
                    alpha_tradeoff=model.alpha_tradeoff,
                    target_range=[model.scaler.min, model.scaler.max],
                )
        return ModelInfoResponse(
            schema_name=schema_name,
            model_kind=kind,
            trained_by=trained_by,
            input_dim=rff.dim_in,
            feature_dim=rff.dim_out,
            rank=rank,
            hyperparameters=hyper,
        )


# Global service instance
model_service = ModelService()
