from dynpictures.tools._phase import *
from dynpictures.tools._models import *
from dynpictures.tools._kvn import *
from dynpictures.tools._pictures import *
from dynpictures.tools._chaos_classical import *
from dynpictures.tools._chaos_quantum import *
from dynpictures.tools._export import *
from dynpictures.tools._experiments import *
