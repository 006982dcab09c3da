a[i] = v
from m import *
a = b = 1
