from flowmap.main import main

main()
