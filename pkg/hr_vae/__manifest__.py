# -*- coding: utf-8 -*-
{
    'name': 'HR-VAE Text Modelling',
    'version': '1.0.0',
    'category': 'Machine Learning/Text',
    'summary': "Holistically regularised VAE for sentences, with a last-state baseline.",
    'description': """
Trains and evaluates a variational autoencoder over sentences whose encoder
imposes the standard-normal prior on a Gaussian posterior at every timestep,
next to the classic last-hidden-state VAE with KL annealing. Both run in the
standard (teacher-forced) and inputless decoder settings, on a small
reverse-mode autodiff core.
    """,
    'author': 'alextranduil',
    'website': '',
    'depends': [],
    'data': [
        'data/toy_e2e.txt',
        'data/README.md',
    ],
    'external_dependencies': {
        'python': [
            'numpy',
        ],
    },
    'license': 'LGPL-3',
    'installable': True,
    'application': True,
}
