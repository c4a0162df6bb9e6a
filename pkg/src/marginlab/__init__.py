"""
`marginlab` is a primal-dual laboratory for the implicit bias of gradient descent.

Run gradient descent on separable linear classification data, compute the
maximum-margin ground truth, and certify convergence rates along the trajectory.
"""

from .losses import *  # noqa
from .smoothed import *  # noqa
from .data import *  # noqa
from .descent import *  # noqa
from .dual import *  # noqa
from .oracle import *  # noqa
from .bounds import *  # noqa
from .serializers import *  # noqa
from ._utils import *  # noqa
from . import validators  # noqa
from . import exceptions  # noqa
from . import config  # noqa
from . import runner  # noqa
from .exceptions import *  # noqa


__version__ = "0.1.0a0"
