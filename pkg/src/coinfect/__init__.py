"""Statistical toolkit for differential diagnosis of arbovirus/malaria coinfection.

Subpackages cover the full workflow: data ingestion and response encoding
(:mod:`coinfect.dataset`), synthetic data generation (:mod:`coinfect.simulate`),
multinomial logit fitting and testing (:mod:`coinfect.mlogit`), random-forest
variable selection (:mod:`coinfect.forest`), balanced-undersampling ensembles
(:mod:`coinfect.ensemble`), odds-ratio effect analysis (:mod:`coinfect.effects`)
and coinfection-probability classification (:mod:`coinfect.diagnosis`).
"""

__version__ = "0.1.0"

from . import dataset, diagnosis, effects, ensemble, forest, mlogit, simulate

__all__ = [
    "dataset",
    "diagnosis",
    "effects",
    "ensemble",
    "forest",
    "mlogit",
    "simulate",
]
