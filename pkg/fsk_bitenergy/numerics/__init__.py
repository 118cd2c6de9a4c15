from .channel import *
from .flows import *
from .mc import *
from .optim import *
from .quadrature import *
from .rates import *
from .specfun import *
