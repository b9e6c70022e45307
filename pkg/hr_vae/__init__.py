# -*- coding: utf-8 -*-
import ast
import os

from . import models

_MANIFEST_PATH = os.path.join(os.path.dirname(__file__), '__manifest__.py')


def load_manifest():
    """
    Reads the package manifest the way an addon loader does: the file holds a
    single dict literal, evaluated with `ast.literal_eval` (never imported).

    Returns:
        dict: The manifest values.
    """
    with open(_MANIFEST_PATH, encoding='utf-8') as manifest_file:
        return ast.literal_eval(manifest_file.read())


def data_file_path(name):
    """
    Resolves a data file declared in the manifest's 'data' list.

    Args:
        name (str): Path relative to the package, e.g. 'data/toy_e2e.txt'.

    Returns:
        str: Absolute path to the file.
    """
    if name not in load_manifest().get('data', []):
        raise FileNotFoundError("Data file %s is not declared in the manifest." % name)
    return os.path.join(os.path.dirname(__file__), name)


def toy_corpus_path():
    """Path of the shipped 200-sentence synthetic corpus."""
    return data_file_path('data/toy_e2e.txt')


__version__ = load_manifest()['version']
