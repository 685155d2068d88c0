from .model_service import model_service, ModelService, MODEL_KINDS, STRATEGIES

__all__ = [
    "model_service",
    "ModelService",
    "MODEL_KINDS",
    "STRATEGIES",
]
