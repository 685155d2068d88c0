from .model_store import load_model, model_from_json, model_kind, model_to_json, save_model

__all__ = [
    "load_model",
    "model_from_json",
    "model_kind",
    "model_to_json",
    "save_model",
]
