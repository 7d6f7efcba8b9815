from .constraints import EpisodeConstraints, draw_constraints, sample_partition
from .env import BuildingGym, EnvState, Measurement, measure, reset, step
