from ._ensot import *  # noqa: F401,F403
from ._ensot import Error  # noqa: F401
