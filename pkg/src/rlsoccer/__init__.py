from .kernel import KERNEL
