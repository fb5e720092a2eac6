from .character import CharacterModel, builtin_character, character_from_dict, load_character
from .obs import proprio_dim, proprio_obs
from .world import CONTROL_SUBSTEPS, PHYSICS_DT, SimState, World
