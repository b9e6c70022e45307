# -*- coding: utf-8 -*-
from . import test_tensor
from . import test_layers
from . import test_vocab
from . import test_hr_vae
from . import test_baselines
from . import test_optimizer
from . import test_config
from . import test_checkpoint
from . import test_training
from . import test_cli
