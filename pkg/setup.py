from setuptools import setup, find_packages

setup(
    name='pixel_he_cache',
    version='0.1.0',
    packages=find_packages(where='', exclude=['tests', 'tests.*']),
    install_requires=[
        'numpy',
        'pandas',
        'PyYAML',
        'click',
        'jinja2',
        'scipy',
        'sympy',
        'Pillow',
    ],
    extras_require={
        'test': ['pytest'],
    },
    entry_points={
        'console_scripts': [
            'pixel_he=scripts.main:cli',
        ],
    },
    include_package_data=True,
    package_data={'scripts': ['params.yml', 'rules.yml']},
    description='Cifrado homomórfico CKKS de imágenes por píxel con cachés de cifrados',
    python_requires='>=3.8',
)
