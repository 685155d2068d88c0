"""
Versioned JSON persistence for trained models

Model dataclasses are converted to their pydantic schemas and serialized
without timestamps, so identical models give byte-identical files and
floats reload bit-for-bit.
"""

import json
import logging
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from densmat.estimators.density_ops import FactorizedDensityMatrix
from densmat.estimators.dmkdc import DmkdcModel
from densmat.estimators.dmkde import DmkdeModel
from densmat.estimators.feature_maps import OneHotMap, RffMap, SoftmaxMap, build_softmax_map
from densmat.estimators.qmc import QmcModel
from densmat.estimators.qmr import QmrModel, TargetScaler
from densmat.exceptions import DataError, InvalidArgumentError
from densmat.models import (
    DmkdcModelSchema,
    DmkdeModelSchema,
    FactorizedSchema,
    OneHotMapSchema,
    QmcModelSchema,
    QmrModelSchema,
    RffMapSchema,
    ScalerSchema,
    SoftmaxMapSchema,
)

logger = logging.getLogger(__name__)

Model = Union[DmkdeModel, DmkdcModel, QmcModel, QmrModel]

SCHEMAS = {
    "densmat/dmkde/v1": DmkdeModelSchema,
    "densmat/dmkdc/v1": DmkdcModelSchema,
    "densmat/qmc/v1": QmcModelSchema,
    "densmat/qmr/v1": QmrModelSchema,
}


def model_kind(model: Model) -> str:
    """
    Short name of a model type: dmkde, dmkdc, qmc or qmr
    """
    kinds = {DmkdeModel: "dmkde", DmkdcModel: "dmkdc", QmcModel: "qmc", QmrModel: "qmr"}
    try:
        return kinds[type(model)]
    except KeyError:
        raise InvalidArgumentError(f"not a densmat model: {type(model).__name__}") from None


def _rff_schema(rff: RffMap) -> RffMapSchema:
    return RffMapSchema(
        gamma=rff.gamma,
        dim_in=rff.dim_in,
        dim_out=rff.dim_out,
        seed=rff.seed,
        weights=rff.weights.tolist(),
        biases=rff.biases.tolist(),
    )


def _rff_model(schema: RffMapSchema) -> RffMap:
    weights = np.array(schema.weights, dtype=np.float64).reshape(schema.dim_out, schema.dim_in)
    biases = np.array(schema.biases, dtype=np.float64)
    if biases.shape != (schema.dim_out,):
        raise DataError(f"RFF biases have length {biases.shape[0]}, expected {schema.dim_out}")
    return RffMap(weights=weights, biases=biases, gamma=schema.gamma, seed=schema.seed)


def _factorized_schema(rho: FactorizedDensityMatrix) -> FactorizedSchema:
    return FactorizedSchema(rank=rho.rank, dim=rho.dim, lambda_=rho.lam.tolist(), v=rho.v.tolist())


def _factorized_model(schema: FactorizedSchema) -> FactorizedDensityMatrix:
    v = np.array(schema.v, dtype=np.float64).reshape(schema.rank, schema.dim)
    lam = np.array(schema.lambda_, dtype=np.float64)
    if lam.shape != (schema.rank,):
        raise DataError(f"factorization has {lam.shape[0]} eigenvalues, expected {schema.rank}")
    return FactorizedDensityMatrix(v=v, lam=lam)


def _qmc_schema(model: QmcModel) -> QmcModelSchema:
    if isinstance(model.output_map, SoftmaxMap):
        output = SoftmaxMapSchema(dim=model.output_map.dim, beta=model.output_map.beta)
    else:
        output = OneHotMapSchema(dim=model.output_map.dim)
    return QmcModelSchema(
        gamma=model.gamma,
        seed=model.seed,
        trained_by=model.trained_by,
        input_map=_rff_schema(model.input_map),
        output_map=output,
        joint=_factorized_schema(model.joint),
    )


def _qmc_model(schema: QmcModelSchema) -> QmcModel:
    if isinstance(schema.output_map, SoftmaxMapSchema):
        output_map = build_softmax_map(schema.output_map.dim, schema.output_map.beta)
    else:
        output_map = OneHotMap(schema.output_map.dim)
    return QmcModel(
        input_map=_rff_model(schema.input_map),
        output_map=output_map,
        joint=_factorized_model(schema.joint),
        gamma=schema.gamma,
        seed=schema.seed,
        trained_by=schema.trained_by,
    )


def model_to_schema(model: Model):
    kind = model_kind(model)
    if kind == "dmkde":
        return DmkdeModelSchema(
            gamma=model.gamma,
            d=model.d,
            D=model.rff.dim_out,
            r=model.rho.rank,
            seed=model.seed,
            embedding=model.embedding,
            trained_by=model.trained_by,
            rff=_rff_schema(model.rff),
            rho=_factorized_schema(model.rho),
        )
    if kind == "dmkdc":
        return DmkdcModelSchema(
            gamma=model.gamma,
            K=model.n_classes,
            seed=model.seed,
            trained_by=model.trained_by,
            priors=model.priors.tolist(),
            rff=_rff_schema(model.rff),
            per_class=[_factorized_schema(rho) for rho in model.per_class],
        )
    if kind == "qmc":
        return _qmc_schema(model)
    return QmrModelSchema(
        base=_qmc_schema(model.base),
        alpha_tradeoff=model.alpha_tradeoff,
        scaler=ScalerSchema(min=model.scaler.min, max=model.scaler.max),
    )


def model_from_schema(schema) -> Model:
    if isinstance(schema, DmkdeModelSchema):
        return DmkdeModel(
            rff=_rff_model(schema.rff),
            rho=_factorized_model(schema.rho),
            gamma=schema.gamma,
            seed=schema.seed,
            trained_by=schema.trained_by,
            embedding=schema.embedding,
        )
    if isinstance(schema, DmkdcModelSchema):
        if len(schema.per_class) != schema.K or len(schema.priors) != schema.K:
            raise DataError(f"DMKDC file does not hold {schema.K} classes")
        return DmkdcModel(
            rff=_rff_model(schema.rff),
            priors=np.array(schema.priors, dtype=np.float64),
            per_class=[_factorized_model(rho) for rho in schema.per_class],
            gamma=schema.gamma,
            seed=schema.seed,
            trained_by=schema.trained_by,
        )
    if isinstance(schema, QmcModelSchema):
        return _qmc_model(schema)
    if isinstance(schema, QmrModelSchema):
        return QmrModel(
            base=_qmc_model(schema.base),
            alpha_tradeoff=schema.alpha_tradeoff,
            scaler=TargetScaler(min=schema.scaler.min, max=schema.scaler.max),
        )
    raise InvalidArgumentError(f"not a model schema: {type(schema).__name__}")


def model_to_json(model: Model) -> str:
    return model_to_schema(model).model_dump_json(by_alias=True)


def model_from_json(text: str) -> Model:
    """
    Parse a model file, dispatching on its "schema" field

    Raises:
        DataError: Malformed JSON, unknown schema or failed validation
    """
    try:
        name = json.loads(text).get("schema")
    except (json.JSONDecodeError, AttributeError) as e:
        raise DataError(f"model file is not a JSON object: {e}") from e
    schema_cls = SCHEMAS.get(name)
    if schema_cls is None:
        raise DataError(f"unknown model schema '{name}'")
    try:
        schema = schema_cls.model_validate_json(text)
    except ValidationError as e:
        raise DataError(f"invalid {name} model: {e.error_count()} validation error(s): {e.errors()[0]['msg']}") from e
    try:
        return model_from_schema(schema)
    except ValueError as e:
        raise DataError(f"inconsistent {name} model: {e}") from e


def save_model(model: Model, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.write_text(model_to_json(model) + "\n", encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot write model {path}: {e}")
        raise DataError(f"cannot write '{path}': {e.strerror or e}") from e
    logger.info(f"Saved {model_kind(model)} model to {path}")
    return path


def load_model(path: Union[str, Path]) -> Model:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot read model {path}: {e}")
        raise DataError(f"cannot read '{path}': {e.strerror or e}") from e
    model = model_from_json(text)
    logger.info(f"Loaded {model_kind(model)} model from {path}")
    return model
