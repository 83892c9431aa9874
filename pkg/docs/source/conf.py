# -*- coding: utf-8 -*-
#
# spinlat documentation build configuration file.

import sys
import os

sys.path.insert(0, os.path.abspath('../../'))
sys.path.insert(0, os.path.abspath('../../spinlat'))
sys.path.insert(0, os.path.abspath('../../spinlat/test'))

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.todo',
    'sphinx.ext.coverage',
    'sphinx.ext.viewcode',
    'sphinx.ext.mathjax',
    'sphinx_autodoc_typehints'
]

templates_path = ['.templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'spinlat'
copyright = u'2026, spinlat developers'
author = u'spinlat developers'

version = u'0.1'
release = u'0.1.0'

language = None
exclude_patterns = []
pygments_style = 'sphinx'
todo_include_todos = True

# -- Options for HTML output ----------------------------------------------

html_theme = 'alabaster'
html_static_path = ['.static']
htmlhelp_basename = 'spinlatdoc'

# -- Options for other output ---------------------------------------------

latex_documents = [
    (master_doc, 'spinlat.tex', u'spinlat Documentation', author, 'manual'),
]

man_pages = [
    (master_doc, 'spinlat', u'spinlat Documentation', [author], 1)
]

texinfo_documents = [
    (master_doc, 'spinlat', u'spinlat Documentation', author, 'spinlat',
     'Finite-range spin dynamics on lattice boxes.', 'Miscellaneous'),
]
