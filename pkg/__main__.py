import runpy

if __name__ == "__main__":
    runpy.run_module("discrete_monge_ampere", run_name="__main__")
