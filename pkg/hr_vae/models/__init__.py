# -*- coding: utf-8 -*-
from . import tensor
from . import layers
from . import vocab
from . import hr_vae
from . import baselines
from . import optimizer
from . import config
from . import checkpoint
from . import training
