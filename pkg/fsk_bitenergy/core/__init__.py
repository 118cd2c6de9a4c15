from .config import *
from .errors import *
from .runtime_log import *
