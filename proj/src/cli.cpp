namespace rsfactor {}
