from pld_accounting.cli import main

main()
