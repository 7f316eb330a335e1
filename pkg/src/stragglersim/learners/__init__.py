from .kmeans import KmeansModel, kmeans_fit, kmeans_nearest
from .mlp import MlpModel, TrainConfig, load_mlp, mlp_forward, mlp_gradients, mlp_init, mlp_train, save_mlp

__all__ = [
    "KmeansModel",
    "MlpModel",
    "TrainConfig",
    "kmeans_fit",
    "kmeans_nearest",
    "load_mlp",
    "mlp_forward",
    "mlp_gradients",
    "mlp_init",
    "mlp_train",
    "save_mlp",
]
