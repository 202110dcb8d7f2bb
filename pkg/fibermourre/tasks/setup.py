"""
setup.py
========

Routine setup of pipeline tasks and of the process-wide thread count.

A task object:

* defines the job resource requirements (memory, threads)
* provides access to its variables by name or through the .var dictionary
* creates the output folder named by the outfile

The thread count comes from the ``FIBERMOURRE_THREADS`` environment
variable (default 1). :func:`configure_threads` exports it to the BLAS and
OpenMP libraries; it must run before numpy is first imported to take
effect there.

"""

import os
import math

THREADS_VARIABLE = "FIBERMOURRE_THREADS"

BLAS_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                  "MKL_NUM_THREADS")


def threads(environ=None):
    '''The thread count requested through FIBERMOURRE_THREADS.'''

    environ = os.environ if environ is None else environ
    value = environ.get(THREADS_VARIABLE, "1")

    try:
        count = int(value)
    except ValueError:
        raise ValueError(THREADS_VARIABLE + " must be an integer, got " +
                         repr(value))

    if count < 1:
        raise ValueError(THREADS_VARIABLE + " must be positive")

    return count


def configure_threads(environ=None):
    '''Export the thread count to the numerical libraries.'''

    environ = os.environ if environ is None else environ
    count = threads(environ)

    for name in BLAS_VARIABLES:
        environ.setdefault(name, str(count))

    return count


class setup():
    '''
    A class for routine setup of pipeline tasks.

    Args:
        infile: The task infile path or None
        outfile: The task outfile path (typically ends with ".sentinel")
        memory: Total memory for the task, "4G" or "4000M" (gigabytes if
            no unit is given). Default = "4G".
        cpu: Threads for the task; default FIBERMOURRE_THREADS.
        make_outdir: True|False. Default = True.

    Attributes:
        job_threads: The number of threads that will be requested
        job_memory: The amount of memory that will be requested per thread
        resources: A dictionary with keys "job_threads" and "job_memory" for
            populating the P.run() kwargs
        outdir: The os.path.dirname of outfile
        log_file: If the outfile path ends with ".sentinel"
        out_file: The outfile without the ".sentinel" suffix
    '''

    def parse_mem(self, memory):
        '''Memory request in gigabytes.'''

        if memory in [None, "None", "none", False, "False", "false", ""]:
            return 4

        if isinstance(memory, (int, float)):
            return memory

        if memory.endswith("G"):
            return int(memory[:-1])

        if memory.endswith("M"):
            return int(memory[:-1]) / 1000

        raise ValueError(
            'Memory request not recognised. Please specify the memory '
            'required in gigabytes (G) or megabytes (M), e.g. "4G" or '
            '"4000M".')

    def set_resources(self, PARAMS, memory="4G", cpu=None):
        '''Resource requests in the form cgat-core expects them.'''

        cpu = threads() if cpu is None else cpu
        gb_requested = self.parse_mem(memory)

        # cgat-core expects memory per core
        mem_gb = int(math.ceil(gb_requested / float(cpu)))

        mpc = PARAMS.get("resources_mempercore") if PARAMS else None
        if mpc:
            mpc = self.parse_mem(mpc)
            ncpu = max(cpu, int(math.ceil(gb_requested / mpc)))
        else:
            ncpu = cpu

        self.job_memory = str(mem_gb) + "G"
        self.job_threads = ncpu
        self.resources = {"job_memory": self.job_memory,
                          "job_threads": self.job_threads}

    def __init__(self, infile, outfile, PARAMS, memory="4G", cpu=None,
                 make_outdir=True):

        self.set_resources(PARAMS, memory=memory, cpu=cpu)

        self.outdir = os.path.dirname(outfile)
        self.outname = os.path.basename(outfile)

        if infile is not None:
            self.indir = os.path.dirname(infile)
            self.inname = os.path.basename(infile)

        if make_outdir and self.outdir not in ['', '.']:
            os.makedirs(self.outdir, exist_ok=True)

        if outfile.endswith(".sentinel"):
            self.log_file = outfile.replace(".sentinel", ".log")
            self.out_file = outfile.replace(".sentinel", "")

        self.var = self.__dict__
