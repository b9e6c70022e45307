# -*- coding: utf-8 -*-
import sys

from hr_vae.cli import main

sys.exit(main())
