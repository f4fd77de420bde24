from setuptools import setup, find_packages

setup(
    name = 'pymsrl',
    version = '1.0.0',
    description = ('The multivariate square-root lasso: solvers, pivotal '
                   'tuning, baselines and a simulation harness'),
    keywords = 'lasso multivariate regression nuclear norm admm',
    license = 'MIT',
    entry_points = {
        'console_scripts': [
            'pymsrl = pymsrl.pymsrl:main'
        ]
    },
    packages = find_packages(exclude=['tests']),
    package_data = {'pymsrl.lib': ['res/*.txt', 'res/*.json']},
    python_requires = '>=3.9',
    install_requires = ['numpy>=1.17',
                        'scipy>=1.4',
                        'joblib>=0.14'],
    extras_require = {'test': ['pytest']},
    classifiers = [
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Programming Language :: Python :: 3'
    ]
)
