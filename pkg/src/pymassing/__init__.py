from .autocomplete import RolloutConfig, apply_mapping, rollout, rollout_latents
from .configuration import get_config, load_config, set_config
from .voxel import Action, DesignState, GridPartition, RoomType, decode_embedding, encode_state, state_diff
