"""Scene-vector trajectory prediction and training-data composition studies."""
from .hrr import bind, power, random_unit, random_unitary, similarity, superpose
from .scene import SceneEncoder, SceneSnapshot, Vocabulary, heat_map
from .models import ConstantVelocityRegressor, LSTMTrajectoryRegressor, evaluate

__version__ = "0.1.0"

__all__ = ["bind", "power", "random_unit", "random_unitary", "similarity", "superpose",
           "SceneEncoder", "SceneSnapshot", "Vocabulary", "heat_map",
           "ConstantVelocityRegressor", "LSTMTrajectoryRegressor", "evaluate", "__version__"]
