from buffgraph.cli import main

main()
